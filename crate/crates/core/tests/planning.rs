use cueplan::planner::{hit_accuracy, push_trials, run_trials, Parameterization, PlanConfig, Planner, HIT_THRESHOLDS};
use cueplan::predictors::Oracle;
use cueplan::worldgen::WorldSpec;
use cueplan::PhysicsParams;

#[test]
fn oracle_dominates_random_under_both_parameterisations() {
    let params = PhysicsParams::default();
    let spec = WorldSpec::default();
    let trials = push_trials(&spec, 100, 77).unwrap();
    let oracle = Oracle::new(1, params);
    let base = PlanConfig::default();
    let random = hit_accuracy(&run_trials(&trials, Planner::Random(&spec), &base, &params).unwrap(), &HIT_THRESHOLDS).unwrap();
    for parameterization in [Parameterization::Polar, Parameterization::Cartesian] {
        let mut cfg = base.clone();
        cfg.cma.parameterization = parameterization;
        let results = run_trials(&trials, Planner::Model(&oracle), &cfg, &params).unwrap();
        assert!(results.iter().all(|r| r.imagined_cost == Some(r.executed_min_distance)));
        let acc = hit_accuracy(&results, &HIT_THRESHOLDS).unwrap();
        for (o, r) in acc.iter().zip(&random) {
            assert!(o.1 >= r.1, "{parameterization:?}: oracle {acc:?} vs random {random:?}");
        }
    }
}
