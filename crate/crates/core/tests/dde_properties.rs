use std::sync::atomic::{AtomicUsize, Ordering};

use baroreflex::dde::{integrate, DdeSystem, FnRhs, SolverConfig};

#[allow(clippy::type_complexity)]
fn linear(tau: f64) -> DdeSystem<FnRhs<impl Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>> {
    DdeSystem::new(FnRhs::new(1, move |_t, _x: &[f64], xd: &[f64], dx: &mut [f64]| dx[0] = -xd[0] / tau), 1.0, vec![1.0])
}

// Single halvings are noisy under step-size control, so errors are compared
// as the worst value over blocks of four halvings.
#[test]
fn tighter_tolerances_shrink_the_end_point_error() {
    for tau in [0.5, 1.0, 3.0] {
        let sys = linear(tau);
        let span = (0.0, 8.0);
        let reference = integrate(&sys, span, &SolverConfig::with_tolerances(1e-13, 1e-15)).unwrap();
        let exact_end = reference.state(reference.len() - 1)[0];
        let errors: Vec<f64> = (0..16)
            .map(|k| {
                let tol = 1e-4 / 2f64.powi(k);
                let tr = integrate(&sys, span, &SolverConfig::with_tolerances(tol, tol * 1e-2)).unwrap();
                (tr.state(tr.len() - 1)[0] - exact_end).abs()
            })
            .collect();
        let worst: Vec<f64> = errors.chunks(4).map(|c| c.iter().copied().fold(0.0, f64::max)).collect();
        assert!(worst.windows(2).all(|w| w[1] < w[0]), "tau {tau}: {worst:?}");
    }
}

#[test]
fn mesh_holds_delay_multiples_and_breakpoints_exactly() {
    let sys = linear(1.0).with_breakpoints(vec![0.37, 2.5]);
    let tr = integrate(&sys, (0.0, 4.0), &SolverConfig::default()).unwrap();
    for t in [0.0, 1.0, 2.0, 3.0, 4.0, 0.37, 1.37, 2.37, 3.37, 2.5, 3.5] {
        assert!(tr.mesh().contains(&t), "{t} missing");
    }
    let shifted = DdeSystem::new(
        FnRhs::new(1, |_t, _x: &[f64], xd: &[f64], dx: &mut [f64]| dx[0] = -xd[0]),
        0.7,
        vec![2.0],
    );
    let tr = integrate(&shifted, (-3.0, 1.0), &SolverConfig::default()).unwrap();
    assert!(tr.mesh().contains(&(-3.0 + 0.7)));
}

#[test]
fn repeated_integrations_are_bit_identical() {
    let sys = linear(0.6);
    let cfg = SolverConfig::with_tolerances(1e-7, 1e-9);
    let a = integrate(&sys, (0.0, 30.0), &cfg).unwrap();
    let b = integrate(&sys, (0.0, 30.0), &cfg).unwrap();
    assert_eq!(a.mesh(), b.mesh());
    assert!(a.states().zip(b.states()).all(|(x, y)| x.iter().zip(y).all(|(u, v)| u.to_bits() == v.to_bits())));
}

#[test]
fn delayed_argument_is_the_history_on_the_first_interval() {
    let history = vec![0.3, -1.25];
    let bad = AtomicUsize::new(0);
    let seen = AtomicUsize::new(0);
    let expect = history.clone();
    let rhs = FnRhs::new(2, |t, x: &[f64], xd: &[f64], dx: &mut [f64]| {
        if t < 1.5 {
            seen.fetch_add(1, Ordering::Relaxed);
            if xd != expect.as_slice() {
                bad.fetch_add(1, Ordering::Relaxed);
            }
        }
        dx[0] = -x[0] + xd[1];
        dx[1] = x[0] - 0.5 * xd[0];
    });
    let sys = DdeSystem::new(rhs, 1.5, history.clone());
    integrate(&sys, (0.0, 6.0), &SolverConfig::default()).unwrap();
    assert!(seen.load(Ordering::Relaxed) > 0);
    assert_eq!(bad.load(Ordering::Relaxed), 0);
}
