use spacetime_core::access::ModePolicy;
use spacetime_core::pipeline::{build_networks, load_inputs, run_behavior, run_spa, synthesize};
use spacetime_core::synth::oracle::oracle_car;
use spacetime_core::synth::{SynthSpec, World};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[test]
fn rank_biased_world_is_selective() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        persons: 200,
        world: World::Selective { q: 0.5 },
        outside_visit_share: 0.0,
        ..SynthSpec::small(5)
    };
    let cfg = synthesize(&spec, dir.path()).unwrap();
    let inputs = load_inputs(&cfg).unwrap();
    let nets = build_networks(&inputs, &cfg).unwrap();
    let (_, spa) = run_spa(&inputs, &nets, &cfg).unwrap();
    let out = run_behavior(&inputs, &spa.sets, &cfg).unwrap();
    let d: Vec<f64> = out.selectivity.iter().filter_map(|r| r.d).collect();
    assert!(d.len() > 50, "{} tested persons", d.len());
    let m = median(d);
    assert!(m < -1.0, "median d {m}");
}

#[test]
fn city_without_pois_has_empty_sets() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        pois: 0,
        persons: 30,
        ..SynthSpec::small(6)
    };
    let cfg = synthesize(&spec, dir.path()).unwrap();
    let inputs = load_inputs(&cfg).unwrap();
    let nets = build_networks(&inputs, &cfg).unwrap();
    let (sites, spa) = run_spa(&inputs, &nets, &cfg).unwrap();
    assert!(sites.is_empty());
    assert_eq!(spa.sets.len(), 30);
    assert!(spa.sets.iter().all(|s| s.a_i == 0 && s.entries.is_empty()));
}

#[test]
fn unbounded_budget_admits_every_reachable_poi() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        persons: 25,
        ..SynthSpec::small(8)
    };
    let mut cfg = synthesize(&spec, dir.path()).unwrap();
    cfg.tb_min = 1e6;
    cfg.mode_policy = ModePolicy::ForceCar;
    let inputs = load_inputs(&cfg).unwrap();
    let nets = build_networks(&inputs, &cfg).unwrap();
    let (sites, spa) = run_spa(&inputs, &nets, &cfg).unwrap();
    let poi_xy: Vec<_> = sites.iter().map(|s| s.place.coord).collect();
    let mut checked = 0;
    for (p, set) in inputs.persons.iter().zip(&spa.sets) {
        if set.t_hw_min.is_none() {
            continue;
        }
        let work = inputs.index.centroid(&p.work_cell).unwrap();
        let home = inputs.index.centroid(&p.home_cell).unwrap();
        let wk = oracle_car(&inputs.roads, &cfg.router, work, &poi_xy);
        let reachable = poi_xy
            .iter()
            .zip(&wk)
            .filter(|(k, t)| t.is_some() && oracle_car(&inputs.roads, &cfg.router, **k, &[home])[0].is_some())
            .count();
        assert_eq!(set.a_i, reachable, "{}", p.person_id);
        assert!(reachable > 0);
        checked += 1;
    }
    assert!(checked > 20);
}
