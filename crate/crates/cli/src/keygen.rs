use std::fs;
use std::path::Path;

use serde::Serialize;
use triad::bfv::{galois_element_for_step, EvaluationKey, GaloisKeys, KeyMode, KeyOwner, ReEncryptionKey, SecretKey};
use triad::codec::Writer;
use triad::model::ModelSpec;
use triad::noise::{Bases, LinearShape, NoiseModel};
use triad::protocol::{PublicModel, SessionPlan};
use triad::ring::{derive_seed, rng_from_seed, seed_from_u64, RingContext};
use triad::Result;

use crate::config::RunConfig;
use crate::output::{bytes, table, Output};
use crate::KeygenArgs;

#[derive(Serialize)]
struct KeyFile {
    file: String,
    bytes: usize,
}

#[derive(Serialize)]
struct Footprint {
    key_mode: KeyMode,
    /// Galois keys per key domain, row swap included.
    keys_per_domain: usize,
    bytes_per_domain: usize,
    written: bool,
}

#[derive(Serialize)]
struct KeygenReport {
    preset: &'static str,
    n: usize,
    bases: Bases,
    files: Vec<KeyFile>,
    footprint: Vec<Footprint>,
}

pub fn run(cfg: &RunConfig, args: &KeygenArgs, out: Output) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(p) = args.preset {
        cfg.preset = p;
    }
    if let Some(m) = args.key_mode {
        cfg.key_mode = m;
    }
    cfg.validate()?;
    let pc = cfg.protocol();
    let ctx = RingContext::new(pc.params)?;
    let n = pc.params.n;
    let (bases, client_steps, proxy_steps) = match &args.model {
        Some(path) => {
            let (model, _) = ModelSpec::load(path)?;
            let plan = SessionPlan::new(&PublicModel::of(&model)?, &pc)?;
            (plan.bases, plan.client_steps, plan.proxy_steps)
        }
        None => {
            let bases = NoiseModel::new(pc.params).select_bases(&[LinearShape::conv(1, 3)], pc.margin_bits, pc.variant)?;
            let all: Vec<i64> = (1..(n / 2) as i64).collect();
            (bases, Some(all.clone()), Some(all))
        }
    };

    let root = derive_seed(&seed_from_u64(cfg.seed), "keygen");
    let mut rng = rng_from_seed(root);
    let s_c = SecretKey::generate(&ctx, KeyOwner::Client, &mut rng);
    let s_p = SecretKey::generate(&ctx, KeyOwner::Proxy, &mut rng);
    let galois = |sk: &SecretKey, steps: &Option<Vec<i64>>, rng: &mut _| match steps {
        Some(s) => GaloisKeys::generate(&ctx, sk, cfg.key_mode, Some(s), bases.w_a, rng),
        None => Ok(GaloisKeys::empty(sk.owner(), cfg.key_mode)),
    };
    let g_client = galois(&s_c, &client_steps, &mut rng)?;
    let g_proxy = galois(&s_p, &proxy_steps, &mut rng)?;
    let rk = ReEncryptionKey::generate(&ctx, &s_c, &s_p, bases.w_sw, &mut rng)?;

    fs::create_dir_all(&args.out_dir)?;
    let mut files = Vec::new();
    let mut write = |name: &str, f: &dyn Fn(&mut Writer)| -> Result<()> {
        let mut w = Writer::new();
        f(&mut w);
        let data = w.into_bytes();
        fs::write(args.out_dir.join(name), &data)?;
        files.push(KeyFile {
            file: name.to_string(),
            bytes: data.len(),
        });
        Ok(())
    };
    write("client.sk", &|w| s_c.write_to(w))?;
    write("proxy.sk", &|w| s_p.write_to(w))?;
    write("galois.client", &|w| g_client.write_to(&ctx, w))?;
    write("galois.proxy", &|w| g_proxy.write_to(&ctx, w))?;
    write("reencrypt.key", &|w| rk.write_to(&ctx, w))?;

    // every evaluation key has the same size for a given base
    let one = EvaluationKey::generate(&ctx, &s_c, galois_element_for_step(n, 1), bases.w_a, &mut rng)?;
    let mut w = Writer::new();
    one.write_to(&ctx, &mut w);
    let per_key = w.len();
    let needed = client_steps.as_ref().map_or(0, |s| s.len()).max(proxy_steps.as_ref().map_or(0, |s| s.len()));
    let footprint = [KeyMode::AllKeys, KeyMode::LogKeys]
        .into_iter()
        .map(|mode| {
            let keys = match mode {
                KeyMode::AllKeys => needed + 1,
                KeyMode::LogKeys => (n / 2).trailing_zeros() as usize + 1,
            };
            Footprint {
                key_mode: mode,
                keys_per_domain: keys,
                bytes_per_domain: keys * per_key,
                written: mode == cfg.key_mode,
            }
        })
        .collect();
    let report = KeygenReport {
        preset: cfg.preset.name(),
        n,
        bases,
        files,
        footprint,
    };
    out.emit(&report, || text(&report, &args.out_dir))
}

fn text(r: &KeygenReport, dir: &Path) -> String {
    let mut s = format!(
        "preset {} (n = {}), w_A = 2^{}, w_SW = 2^{}\nwrote {}:\n",
        r.preset,
        r.n,
        r.bases.w_a.trailing_zeros(),
        r.bases.w_sw.trailing_zeros(),
        dir.display()
    );
    let rows: Vec<Vec<String>> = r.files.iter().map(|f| vec![f.file.clone(), bytes(f.bytes)]).collect();
    s.push_str(&table(&["file", "size"], &rows));
    s.push_str("\ngalois key footprint per key domain:\n");
    let rows: Vec<Vec<String>> = r
        .footprint
        .iter()
        .map(|f| {
            vec![
                f.key_mode.name().to_string(),
                f.keys_per_domain.to_string(),
                bytes(f.bytes_per_domain),
                if f.written { "written".into() } else { String::new() },
            ]
        })
        .collect();
    s.push_str(&table(&["mode", "keys", "size", ""], &rows));
    s
}
