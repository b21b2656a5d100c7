//! Configurations are TOML with every field defaulted. This lists the shipped
//! presets, prints one resolved config, and shows how a bad field is reported.
//!
//! cargo run --release --example config_presets -- [preset]

use qdd::config::{RunConfig, RUN_PRESETS, SWEEP_PRESETS};
use qdd::profiles::profile_presets;

fn main() -> qdd::Result<()> {
    let names: Vec<_> = RUN_PRESETS.iter().map(|(k, _)| *k).collect();
    let sweeps: Vec<_> = SWEEP_PRESETS.iter().map(|(k, _)| *k).collect();
    let profiles: Vec<_> = profile_presets().into_keys().collect();
    println!("run presets:     {}", names.join(", "));
    println!("sweep presets:   {}", sweeps.join(", "));
    println!("initial profiles: {}", profiles.join(", "));

    let id = std::env::args().nth(1).unwrap_or_else(|| "interaction".into());
    let cfg = RunConfig::load(&id)?;
    println!("\n# {id}\n{}", cfg.to_toml());

    if let Err(e) = RunConfig::from_toml("[model]\nepsilon = -1.0\n") {
        println!("rejected: {e}");
    }
    Ok(())
}
