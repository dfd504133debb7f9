#![no_main]

use coulomb_screen::cli::shells::{format_shell_list, parse_shell_list};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = parse_shell_list(text) {
        let back = parse_shell_list(&format_shell_list(&cfg)).expect("formatted list parses");
        assert_eq!(back, cfg);
    }
});
