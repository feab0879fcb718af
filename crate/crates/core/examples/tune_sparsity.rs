//! Sweeps the SOMP sparsity level (and optionally other pipeline keys) on the
//! default layered phantom and prints the output SNR of each setting.
//!
//! The same noisy, subsampled observation is reused for every setting so that
//! only the swept parameter changes. Usage:
//!
//! ```text
//! cargo run --release --example tune_sparsity -- [rate] [T,T,...] [key=value ...]
//! cargo run --release --example tune_sparsity -- 0.1 4,8,12 block_b=1
//! ```

use thzcube::config::KeyValues;
use thzcube::phantom::{generate_layered, LayeredPhantomSpec};
use thzcube::pipeline::{self, PipelineConfig};

fn main() -> thzcube::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let rate = args.first().map_or("0.1", String::as_str);
    let levels: Vec<usize> = args
        .get(1)
        .map_or("4,8,12,16", String::as_str)
        .split(',')
        .map(|s| s.trim().parse().expect("sparsity levels are integers"))
        .collect();

    let mut kv = KeyValues::default();
    kv.insert("rate", rate);
    for extra in args.iter().skip(2) {
        let (k, v) = extra.split_once('=').expect("extra arguments are key=value");
        kv.insert(k, v);
    }

    let clean = generate_layered(&LayeredPhantomSpec::default())?;
    let base = PipelineConfig::from_key_values(&kv)?;
    let (incomplete, mask) = pipeline::degrade(&clean, &base)?;

    println!("somp_max_atoms,wavelet_db,interp_db,proposed_db,seconds");
    for t in levels {
        let mut kv = kv.clone();
        kv.insert("somp_max_atoms", t.to_string());
        let cfg = PipelineConfig::from_key_values(&kv)?;
        let start = std::time::Instant::now();
        let run = pipeline::run_on(&clean, incomplete.clone(), mask.clone(), &cfg)?;
        let snr: Vec<String> = run.rows.iter().map(|r| format!("{:.3}", r.output_snr_db)).collect();
        println!("{t},{},{:.1}", snr.join(","), start.elapsed().as_secs_f64());
    }
    Ok(())
}
