//! Builds a scripted mock-gateway fixture for a catalog, so the whole
//! pipeline can run offline.
//!
//! Usage: offline_fixture <catalog.json> <pools.json> <out.json> [per_tool] [augment_count]

use fcpipe_core::catalog::load_catalog;
use fcpipe_core::synthesis::{offline, EntityPools, SynthesisConfig, TemplateSet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    if args.len() < 4 {
        eprintln!("usage: offline_fixture <catalog.json> <pools.json> <out.json> [per_tool] [augment_count]");
        std::process::exit(2);
    }
    let catalog = load_catalog(&args[1])?;
    let pools = EntityPools::load(&args[2])?;
    let templates = TemplateSet::builtin();
    let mut config = SynthesisConfig::default();
    if let Some(n) = args.get(4) {
        config.per_tool = n.parse()?;
    }
    if let Some(n) = args.get(5) {
        config.augment_count = n.parse()?;
    }
    let fixture = offline::script_fixture(&catalog, &pools, &templates, &config)?;
    fixture.save(&args[3])?;
    eprintln!(
        "scripted {} replies for {} tools into {}",
        fixture.len(),
        catalog.tools.len(),
        args[3]
    );
    Ok(())
}
