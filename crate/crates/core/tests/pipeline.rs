use gma_core::assess::ExpertiseWeights;
use gma_core::pipeline::{Bundle, InputSpec, PipelineConfig};
use gma_core::Execution;

fn run_into(dir: &std::path::Path, exec: Execution) -> gma_core::pipeline::Manifest {
    let inputs = InputSpec::builtin("bundled").load(&ExpertiseWeights::default()).unwrap();
    Bundle::new(dir).unwrap().run_all(&inputs, &PipelineConfig::default(), exec).unwrap()
}

#[test]
fn bundled_run_is_deterministic_across_execution_modes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run_into(a.path(), Execution::Parallel);
    let mb = run_into(b.path(), Execution::Sequential);
    assert_eq!(ma, mb);
    assert_eq!(ma.headline.configurations, "15116544");
    assert_eq!(ma.headline.pairs_generated, 981);
    assert_eq!(ma.headline.cluster_sizes.iter().sum::<usize>(), 981);
    println!("{}", std::fs::read_to_string(a.path().join("summary.txt")).unwrap());
}

fn bundle_bytes(dir: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn stage_composition_equals_full_run() {
    let inputs = InputSpec::builtin("bundled").load(&Default::default()).unwrap();
    let config = PipelineConfig::default();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    Bundle::new(a.path()).unwrap().run_all(&inputs, &config, Execution::Parallel).unwrap();

    let staged = Bundle::new(b.path()).unwrap();
    let err = staged.write_cluster_stage(&config, Execution::Sequential).unwrap_err();
    assert!(err.to_string().contains("run `pairs` first"), "{err}");
    staged.write_pairs_stage(&inputs, &config, Execution::Sequential).unwrap();
    let err = staged.write_scenario_stage(&config).unwrap_err();
    assert!(err.to_string().contains("run `cluster` first"), "{err}");
    staged.write_network_stage(&config, Execution::Sequential).unwrap();
    staged.write_cluster_stage(&config, Execution::Sequential).unwrap();
    staged.write_scenario_stage(&config).unwrap();
    staged.write_manifest().unwrap();

    assert_eq!(bundle_bytes(a.path()), bundle_bytes(b.path()));
}

#[test]
fn later_stage_overrides_reach_the_manifest() {
    let inputs = InputSpec::builtin("bundled").load(&Default::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let bundle = Bundle::new(dir.path()).unwrap();
    let mut config = PipelineConfig::default();
    bundle.write_pairs_stage(&inputs, &config, Execution::Sequential).unwrap();
    bundle.write_network_stage(&config, Execution::Sequential).unwrap();
    config.k = 3;
    bundle.write_cluster_stage(&config, Execution::Sequential).unwrap();
    bundle.write_scenario_stage(&config).unwrap();
    let m = bundle.write_manifest().unwrap();
    assert_eq!(m.config.k, 3);
    assert_eq!(m.headline.cluster_sizes.len(), 3);
    assert_eq!(m.headline.cluster_sizes.iter().sum::<usize>(), 981);
}
