mod common;

use common::{direct_spectra, ladder, params, steady};
use squeezelab::model::NoiseModel;
use squeezelab::response::{FeedbackLaw, RationalFilter};
use squeezelab::spectra::quadrature_spectra;

fn check(p: &squeezelab::model::SystemParams, fb: &FeedbackLaw, label: &str) {
    let st = steady(p);
    let mut worst = 0.0f64;
    for omega in [
        1e2, 3.1e3, 1e4, 5.5e4, 1.49e5, 2.2e5, 3e5, 3.0001e5, 4.7e5, 1e6, 2.3e6, 1e7,
    ] {
        let q = quadrature_spectra(p, &st, fb, &NoiseModel::vacuum(), omega).unwrap();
        let (sx, sy, sxy) = direct_spectra(p, &st, fb, omega);
        let scale = (sx * sy).sqrt();
        worst = worst
            .max((q.s_x - sx).abs() / sx)
            .max((q.s_y - sy).abs() / sy)
            .max((q.s_xy - sxy).abs() / scale);
    }
    assert!(worst < 1e-8, "{label}: worst relative deviation {worst:e}");
}

#[test]
fn resonant_single_mode_proportional() {
    let p = params(ladder(1, 3e5, 3e5, 1e4), 0.0, 0.99, 1.0, 0.0, 4.0);
    let st = steady(&p);
    check(
        &p,
        &FeedbackLaw::proportional_to_coupling(0.2821, &st.coupling),
        "θ = 0",
    );
    let p = params(ladder(1, 3e5, 3e5, 1e4), 0.0, 0.9, 0.7, 0.4, 0.3);
    check(
        &p,
        &FeedbackLaw::proportional_to_coupling(-0.1, &st.coupling),
        "θ = 0.4, lossy",
    );
}

#[test]
fn detuned_multimode_with_filters() {
    let p = params(ladder(4, 1.5e5, 4.5e5, 1e3), 3e5, 0.95, 0.8, 1.1, 4.0);
    let st = steady(&p);
    let filters = st
        .coupling
        .iter()
        .map(|g| RationalFilter {
            numerator: vec![0.3 * g, 1e-7 * g],
            denominator: vec![1.0, 2e-6, 1e-13],
        })
        .collect();
    check(&p, &FeedbackLaw::RationalPerMode { filters }, "detuned, rational");
    check(&p, &FeedbackLaw::Off, "detuned, off");
}

#[test]
fn zero_temperature_and_perfect_transmission() {
    let p = params(ladder(3, 2e5, 4e5, 1e5), 0.0, 1.0, 1.0, 0.0, 0.0);
    check(&p, &FeedbackLaw::Off, "t = 1, T = 0");
}
