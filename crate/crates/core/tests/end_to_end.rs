use coded_mv::coding::{build_plan, coded_products, ClientRoster, Scheme};
use coded_mv::matrix::{partition_even, Matrix, SparseMatrix};
use coded_mv::rng::{domain, stream, uniform_vector};
use coded_mv::simulator::{
    simulate_and_decode, CommModel, StragglerInjection, TimingModel, Workload,
};

fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let d: f64 = got
        .iter()
        .zip(want)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    d / want.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[test]
fn heterogeneous_round_recovers_sparse_product() {
    let roster: ClientRoster = "2,2,1,1,1|1,1".parse().unwrap();
    let a = SparseMatrix::random(90, 7 * 4, 0.7, &mut stream(5, domain::DATA)).unwrap();
    let x = uniform_vector(&mut stream(5, domain::VECTOR), 90);
    let want: Vec<f64> = {
        let d = a.to_dense();
        (0..d.cols())
            .map(|j| (0..90).map(|i| d.get(i, j) * x[i]).sum())
            .collect()
    };
    let p = partition_even(&Matrix::Sparse(a), 7).unwrap();
    for scheme in [Scheme::Proposed, Scheme::Dense, Scheme::Poly] {
        let plan = build_plan(scheme, &roster, 5).unwrap();
        let products = coded_products(&p, &plan, &x).unwrap();
        // Client 0 carries two virtual workers; losing it is the worst case.
        for stragglers in [vec![0], vec![5, 6], vec![2, 3]] {
            let timing = TimingModel::default().with_stragglers(StragglerInjection::Explicit {
                clients: stragglers.clone(),
            });
            let out = simulate_and_decode(
                &plan,
                &timing,
                &CommModel::default(),
                Workload::Products {
                    rows: 90,
                    products: &products,
                    expected: Some(&want),
                },
                5,
                0,
            );
            let r = out
                .result
                .unwrap_or_else(|| panic!("{scheme:?} {stragglers:?}: {:?}", out.report.decode));
            assert!(
                rel_err(&r.concatenated(), &want) < 1e-8,
                "{scheme:?} {stragglers:?}"
            );
        }
    }
}
