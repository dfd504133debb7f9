#![no_main]

use coulomb_screen::cli::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = RunConfig::from_json(text) {
        // anything accepted must survive a round trip
        let again = RunConfig::from_json(&cfg.to_json()).expect("serialized config parses");
        assert_eq!(again, cfg);
    }
});
