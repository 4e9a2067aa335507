//! A full run driven by a TOML configuration, writing every artifact.

use csgva::cli::{self, RunConfig};

fn main() -> csgva::Result<()> {
    let dir = std::env::temp_dir().join("csgva-example");
    std::fs::create_dir_all(&dir)?;
    let data = dir.join("rates.csv");
    let mut text = String::from("rate\n");
    let mut rate = 1.6f64;
    for t in 0..200 {
        rate *= 1.0 + 0.004 * ((t as f64) * 2.3).sin() * (1.0 + 0.5 * (t as f64 / 30.0).cos());
        text.push_str(&format!("{rate}\n"));
    }
    std::fs::write(&data, text)?;

    let mut config = RunConfig::from_toml_str(&format!(
        r#"
model = "svm"
data = {data:?}
samples = 1000
reps = 200

[fit]
method = "csgva"
init = "from_gva"
seed = 42
"#
    ))?;
    config.out = dir.join("out");
    let report = cli::run(&config)?;
    println!("{} iterations; artifacts:", report.iterations);
    let mut names: Vec<_> = std::fs::read_dir(&config.out)?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect();
    names.sort();
    for n in names {
        println!("  {}", config.out.join(n).display());
    }
    Ok(())
}
