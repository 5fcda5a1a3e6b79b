use std::f64::consts::PI;

use shepherd::cli::commands::{feasibility_report, simulation_setup};
use shepherd::cli::ExperimentConfig;
use shepherd::micro::{containment, AgentEnsemble, Simulation};
use shepherd::{Grid, TorusPoint};

fn small() -> ExperimentConfig {
    ExperimentConfig::from_toml(
        "[agents]\ntargets = 50\n[sim]\nhorizon = 0.5\n[grids]\ncontrol = 32\ndeconvolution = 13\n",
    )
    .unwrap()
}

#[test]
fn uniform_target_needs_no_herders() {
    let mut cfg = small();
    cfg.von_mises.concentration = Some(0.0);
    let report = feasibility_report(&cfg, &Grid::new(13).unwrap(), &Grid::new(32).unwrap()).unwrap();
    // the spectral gradient of a constant is zero up to roundoff
    assert!(report.minimal_mass().abs() < 1e-10, "{}", report.minimal_mass());
    assert_eq!(report.herder_count, Some(0));
    assert!(report.stability.g_sup < 1e-10);

    let (setup, _) = simulation_setup(&cfg).unwrap().unwrap();
    assert_eq!(setup.herder_count, 0);
    let run = Simulation::new(setup).unwrap().run(|_| Ok(())).unwrap();
    assert!(run.final_ensemble.herders.is_empty());
    assert_eq!(run.final_ensemble.targets.len(), 50);
}

#[test]
fn zero_horizon_reports_the_initial_containment_only() {
    let mut cfg = small();
    cfg.agents.herders = Some(9);
    cfg.sim.horizon = 0.0;
    let (setup, _) = simulation_setup(&cfg).unwrap().unwrap();
    let goal = setup.goal;
    let mut sim = Simulation::new(setup).unwrap();
    let initial = containment(&sim.ensemble().targets, &goal, 0.0).unwrap();
    let run = sim.run(|_| Ok(())).unwrap();
    assert_eq!(run.metrics.len(), 1);
    assert_eq!(run.metrics[0].containment, initial);
    assert_eq!(sim.step_index(), 0);
}

#[test]
fn targets_at_the_goal_centre_are_fully_contained() {
    let cfg = small();
    let goal = cfg.goal().unwrap();
    let targets = vec![goal.center(); 12];
    let m = containment(&targets, &goal, 3.0).unwrap();
    assert_eq!(m.chi, 100.0);
    assert!(containment(&[], &goal, 0.0).is_err());
}

#[test]
fn configuration_round_trips_through_text() {
    let path = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml");
    let cfg = ExperimentConfig::load(&path).unwrap();
    let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(cfg, again);
    assert_eq!(cfg.hash(), again.hash());
}

#[test]
fn simulation_from_a_given_ensemble_keeps_every_agent_in_the_domain() {
    let mut cfg = small();
    cfg.agents.herders = Some(4);
    cfg.sim.horizon = 0.2;
    let (setup, _) = simulation_setup(&cfg).unwrap().unwrap();
    // agents sitting on the seam must be wrapped consistently
    let edge = -PI;
    let ensemble = AgentEnsemble {
        herders: vec![TorusPoint::new(edge, edge).unwrap(); 4],
        targets: (0..50).map(|i| TorusPoint::new(edge, -PI + 0.1 * i as f64).unwrap()).collect(),
    };
    let mut sim = Simulation::with_ensemble(setup, ensemble).unwrap();
    sim.run(|s| {
        for p in s.ensemble().herders.iter().chain(&s.ensemble().targets) {
            assert!((-PI..PI).contains(&p.x1()) && (-PI..PI).contains(&p.x2()));
        }
        Ok(())
    })
    .unwrap();
}
