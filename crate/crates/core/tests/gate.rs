use exo_gate::angular::SpinRole;
use exo_gate::basis::StateSpace;
use exo_gate::calibrate::{evaluate, first_order_seed, optimize_amplitude, Objective, Tolerances};
use exo_gate::engine::{CrossPair, GateContext, StepPolicy, DEFAULT_WINDOW};
use exo_gate::metrics::{cz_target, trace_distance_d, LogicalFrame, SubspaceFigures};
use exo_gate::model::{BiasConfig, LogicalEncoding, TotalJ};
use exo_gate::noise::{noisy_trial, NoiseParams};

fn context(cross: CrossPair) -> GateContext {
    GateContext::new(BiasConfig::default(), cross, StateSpace::Logical, DEFAULT_WINDOW, StepPolicy::with_max_phase(1.0), 1.0)
        .unwrap()
}

#[test]
fn calibrated_gate_is_gauge_invariant() {
    let ctx = context(CrossPair::default());
    let frame = LogicalFrame::new(&ctx.bias, LogicalEncoding::dfs());
    let cal = optimize_amplitude(&ctx, &frame, 300.0, &Objective::default(), &Tolerances::default()).unwrap();
    assert!(cal.figures.j0.d < 2e-3 && cal.figures.j1.d < 2e-3, "{:?}", cal.figures);
    assert!(cal.figures.j0.leakage < 1e-6 && cal.figures.j1.leakage < 1e-6);
    let u = ctx.composite_with_steps(&cal.pulse(ctx.window).unwrap(), cal.steps).unwrap();
    let b0 = frame.gate_block(&u, TotalJ::Zero).unwrap();
    let b1 = frame.gate_block(&u, TotalJ::One).unwrap();
    assert!(trace_distance_d(&b0, &b1.block) < 1e-2);
}

#[test]
fn outer_spin_coupling_needs_a_quarter_of_the_area() {
    let zz = context(CrossPair::default());
    let tt = context(CrossPair::roles(SpinRole::T, SpinRole::T));
    let ratio = first_order_seed(&zz, 200.0).unwrap() / first_order_seed(&tt, 200.0).unwrap();
    assert!((ratio - 4.0).abs() < 1e-12);
    let frame = LogicalFrame::new(&tt.bias, LogicalEncoding::dfs());
    let pulse = tt.pulse(first_order_seed(&tt, 400.0).unwrap(), 400.0).unwrap();
    let steps = tt.check_steps(&pulse).unwrap().steps;
    let g = evaluate(&tt, &frame, &pulse, steps).unwrap();
    assert!(g.j0.d < 2e-2 && g.j1.d < 2e-2, "{g:?}");
}

#[test]
fn gate_figures_do_not_depend_on_the_encoding() {
    let ctx = context(CrossPair::default());
    let pulse = ctx.pulse(first_order_seed(&ctx, 200.0).unwrap(), 200.0).unwrap();
    let steps = ctx.check_steps(&pulse).unwrap().steps;
    let u = ctx.composite_with_steps(&pulse, steps).unwrap();
    for j in TotalJ::BOTH {
        let d = |enc| trace_distance_d(&LogicalFrame::new(&ctx.bias, enc).gate_block(&u, j).unwrap(), &cz_target());
        assert!((d(LogicalEncoding::dfs()) - d(LogicalEncoding::rx_aeon())).abs() < 1e-12);
    }
}

#[test]
fn noise_trials_follow_the_seed() {
    let ctx = context(CrossPair::default());
    let frame = LogicalFrame::new(&ctx.bias, LogicalEncoding::dfs());
    let pulse = ctx.pulse(first_order_seed(&ctx, 60.0).unwrap(), 60.0).unwrap();
    let steps = ctx.check_steps(&pulse).unwrap().steps;
    let params = NoiseParams { seed: 11, ..NoiseParams::default() };
    let a = noisy_trial(&ctx, &frame, &pulse, steps, &params, 0).unwrap();
    assert_eq!(a, noisy_trial(&ctx, &frame, &pulse, steps, &params, 0).unwrap());
    assert_ne!(a.j1.d, noisy_trial(&ctx, &frame, &pulse, steps, &params, 1).unwrap().j1.d);
    assert_ne!(a.j1.d, noisy_trial(&ctx, &frame, &pulse, steps, &NoiseParams { seed: 12, ..params }, 0).unwrap().j1.d);

    let silent = NoiseParams { amplitude_n: 0.0, ..params };
    let quiet = noisy_trial(&ctx, &frame, &pulse, steps, &silent, 0).unwrap();
    let clean = ctx.composite_with_steps(&pulse, steps).unwrap();
    assert_eq!(quiet.j1, SubspaceFigures::of(&frame.gate_block(&clean, TotalJ::One).unwrap()));
}
