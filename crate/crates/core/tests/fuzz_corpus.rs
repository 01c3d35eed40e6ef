//! Replays the checked-in fuzz seeds through the same entry points the fuzz
//! targets use, so regressions show up without a nightly toolchain.

use std::path::PathBuf;

use coded_mv::coding::CodingPlan;
use coded_mv::decoding::{decode, neighborhood_violations, DecodeProblem};
use coded_mv::io::{parse_dense_csv, parse_matrix_market, write_matrix_market};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn matrix_market_seeds() {
    let mut parsed = 0;
    for (name, bytes) in seeds("parse_matrix_market") {
        if let Ok(m) = parse_matrix_market(&bytes) {
            let mut buf = Vec::new();
            write_matrix_market(&m, &mut buf).unwrap();
            assert_eq!(parse_matrix_market(&buf).unwrap(), m, "{name}");
            parsed += 1;
        }
    }
    assert_eq!(parsed, 3);
}

#[test]
fn dense_csv_seeds() {
    let ok: Vec<String> = seeds("parse_dense_csv")
        .into_iter()
        .filter(|(_, b)| parse_dense_csv(b).is_ok())
        .map(|(n, _)| n)
        .collect();
    assert_eq!(ok, ["basic.csv", "single_column.csv"]);
}

#[test]
fn plan_seeds() {
    let mut parsed = 0;
    for (_, bytes) in seeds("parse_plan_json") {
        if let Ok(plan) = CodingPlan::from_json(&bytes) {
            let subset: Vec<usize> = (0..plan.k_bar).collect();
            let _ = neighborhood_violations(&plan, &subset);
            parsed += 1;
        }
    }
    assert_eq!(parsed, 2);
}

#[test]
fn decode_seeds() {
    let results: Vec<(String, bool)> = seeds("decode_problem")
        .into_iter()
        .map(|(name, bytes)| {
            let p: DecodeProblem = serde_json::from_slice(&bytes).unwrap();
            let ok = DecodeProblem::new(p.k_bar, p.returned).is_ok_and(|p| decode(&p).is_ok());
            (name, ok)
        })
        .collect();
    assert_eq!(
        results,
        [
            ("short.json".into(), false),
            ("singular.json".into(), false),
            ("solvable.json".into(), true)
        ]
    );
}
