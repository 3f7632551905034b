use latmod_core::mcmc::{run_chain, McmcConfig};
use latmod_core::model::Hyperparams;
use latmod_core::numerics::Streams;
use latmod_core::partition::Partition;
use latmod_core::summaries::{accumulate_cocluster, adjusted_rand_index, binder_estimate};
use latmod_views::gusto::{simulate_gusto_like, GustoPriors, GustoSpec};

#[test]
fn three_view_fit_recovers_view_partitions() {
    let spec = GustoSpec::default();
    let mut rng = Streams::new(11).rng(&[0]);
    let data = simulate_gusto_like(200, &spec, &mut rng).unwrap();
    let views = data.views(&spec, &GustoPriors::default(), 100).unwrap();
    let hyper = Hyperparams::shifted_poisson(0.1, 0.1, 5.0).unwrap();
    let config = McmcConfig {
        total_iterations: 1500,
        burn_in: 500,
        thin: 2,
        seed: 5,
        ..McmcConfig::default()
    };
    let trace = run_chain(views, &hyper, &config).unwrap();
    for j in 0..3 {
        let cc = accumulate_cocluster(&trace.c[j]).unwrap();
        let est = binder_estimate(&trace.c[j], &cc).unwrap();
        let ari = adjusted_rand_index(&est.partition, &Partition::from_labels(&data.c[j])).unwrap();
        println!("view {j}: ARI {ari:.3}, k = {}", est.partition.k());
        assert!(ari >= 0.8, "view {j}: ARI {ari}");
    }
}
