#![no_main]

use brw_lab::table::{merge, Table};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(t) = Table::parse(text) {
        let mut out = Vec::new();
        t.write(&mut out).expect("write to memory");
        let again = Table::parse(std::str::from_utf8(&out).unwrap()).expect("written table re-parses");
        assert_eq!(again, t);
        let m = merge(&[t.clone(), t.clone()]).unwrap();
        assert_eq!(m.rows.len(), 2 * t.rows.len());
        for h in &t.header {
            let _ = t.floats(h);
        }
    }
});
