//! Fuzz the experiment-config parser: arbitrary input must either produce a
//! fully validated config or a clean error, never panic. Parsed configs must
//! satisfy the documented invariants.

#![no_main]

use libfuzzer_sys::fuzz_target;
use taxsim::config::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = parse_config(text) {
        // validation promises these bounds on every accepted document
        assert!(cfg.alpha > 0.0 && cfg.alpha < 1.0);
        assert!(cfg.batch >= 1);
        assert!(cfg.converge.levels >= 1 && cfg.converge.base_steps >= 1);
        assert!(cfg.rate >= 0.0);
    }
});
