#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = coded_mv::io::parse_matrix_market(data) {
        // Whatever parses must write back and parse to the same matrix.
        let mut buf = Vec::new();
        coded_mv::io::write_matrix_market(&m, &mut buf).unwrap();
        assert_eq!(coded_mv::io::parse_matrix_market(&buf).unwrap(), m);
    }
});
