#![no_main]

use brw_lab::config::Config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = text.parse::<Config>() {
        let again: Config = cfg.to_string().parse().expect("canonical form re-parses");
        assert_eq!(again, cfg);
    }
});
