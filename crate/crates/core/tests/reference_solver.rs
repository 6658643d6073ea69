use fisale::reference_solver::*;

fn undamped(steps: usize) -> PistonParams {
    PistonParams {
        damping: 0.0,
        steps,
        ..Default::default()
    }
}

/// Largest displacement gap between a run and a run with a quarter of the step.
fn error_against_finer(dt: f64, horizon: f64) -> f64 {
    let run = |dt: f64| {
        let p = PistonParams {
            dt,
            steps: (horizon / dt).round() as usize,
            ..Default::default()
        };
        run_piston(&p).unwrap().displacements()
    };
    let coarse = run(dt);
    let fine = run(dt / 4.0);
    coarse
        .iter()
        .enumerate()
        .map(|(i, s)| (s - fine[4 * i]).abs())
        .fold(0.0, f64::max)
}

#[test]
fn undamped_energy_drift_stays_below_one_percent() {
    let p = undamped(1000);
    let run = run_piston(&p).unwrap();
    assert!(run.energy_drift(&p) < 0.01, "drift {}", run.energy_drift(&p));
}

#[test]
fn energy_balance_closes_with_the_face_flux() {
    let coarse = undamped(1000);
    let fine = PistonParams {
        cells: 2 * coarse.cells,
        dt: coarse.dt / 2.0,
        steps: 2 * coarse.steps,
        ..coarse.clone()
    };
    let r_coarse = run_piston(&coarse).unwrap().energy_budget_residual(&coarse);
    let r_fine = run_piston(&fine).unwrap().energy_budget_residual(&fine);
    assert!(r_coarse < 1e-3, "{r_coarse}");
    assert!(r_fine < r_coarse, "{r_fine} vs {r_coarse}");
}

#[test]
fn damped_budget_accounts_for_dissipation() {
    let p = PistonParams {
        damping: 2.0,
        steps: 400,
        ..Default::default()
    };
    let run = run_piston(&p).unwrap();
    assert!(run.energy_drift(&p) > 0.1);
    assert!(run.energy_budget_residual(&p) < 2e-3);
}

#[test]
fn displacement_error_shrinks_under_step_halving() {
    let dt = PistonParams::default().dt;
    let e1 = error_against_finer(dt, 2.0);
    let e2 = error_against_finer(dt / 2.0, 2.0);
    assert!(e1 / e2 >= 1.8, "{e1} / {e2}");
}

#[test]
fn decoupled_limit_matches_the_oscillator() {
    let base = PistonParams {
        area: 1e-12,
        ..Default::default()
    };
    let dt = base.dry_period() / 1e4;
    let p = PistonParams {
        dt,
        steps: 20_000,
        ..base
    };
    let run = run_piston(&p).unwrap();
    let worst = run
        .states
        .iter()
        .map(|s| (s.displacement - damped_oscillator(&p, s.time)).abs())
        .fold(0.0, f64::max);
    assert!(worst / p.initial_displacement <= 1e-4, "{worst}");
}

#[test]
fn residuals_decrease_within_every_step() {
    let run = run_piston(&PistonParams::default()).unwrap();
    for r in &run.reports {
        assert!(r.residuals.windows(2).all(|w| w[1] <= w[0]), "{:?}", r.residuals);
        assert!(*r.residuals.last().unwrap() < PistonParams::default().tol);
    }
}

#[test]
fn relaxation_factor_does_not_change_the_accepted_state() {
    let relaxed = PistonParams::default();
    let plain = PistonParams { omega: 1.0, ..relaxed.clone() };
    let run = run_piston(&relaxed).unwrap();
    for (k, s) in run.states.iter().take(relaxed.steps).enumerate() {
        let (a, _) = partitioned_step(&relaxed, s, k + 1).unwrap();
        let (b, _) = partitioned_step(&plain, s, k + 1).unwrap();
        assert!((a.displacement - b.displacement).abs() < relaxed.tol, "step {k}");
    }
}

#[test]
fn gas_moves_with_the_piston_face() {
    let run = run_piston(&PistonParams::default()).unwrap();
    for s in &run.states {
        assert_eq!(*s.node_velocity.last().unwrap(), s.velocity);
        assert_eq!(s.node_velocity[0], 0.0);
    }
}

#[test]
fn frames_keep_channel_accounting_and_ordering() {
    let p = PistonParams {
        steps: 50,
        ..Default::default()
    };
    let (frames, run) = simulate_piston(&p).unwrap();
    assert_eq!(frames.len(), p.steps + 1);
    for (f, s) in frames.iter().zip(&run.states) {
        let (cf, cs, cb) = (f.fluid.channels(), f.solid.channels(), f.interface.channels());
        assert_eq!((cb, cf + cs), (3, 3));
        let xs: Vec<f64> = (0..p.cells - 1).map(|i| f.fluid.positions.row(i)[0]).collect();
        assert!(xs.windows(2).all(|w| w[1] > w[0]));
        let face = f.interface.positions.row(0)[0];
        assert!((face - s.length(&p)).abs() < 1e-15);
        assert!(xs.iter().all(|&x| x > 0.0 && x < face));
    }
}
