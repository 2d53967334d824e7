use coallab::excursion::{local_time_profile, sample_reflected_forest};
use coallab::feller::feller_euler_maruyama;
use coallab::rng::replicate_rng;
use coallab::stats::{ks_two_sample, EmpiricalSample};

/// Local time at level 0.5 of reflected forests against Euler–Maruyama runs
/// with noise scale `sigma`.
fn compare(sigma: f64) -> f64 {
    let h = 1.0 / 100.0;
    let reps = 800;
    let lattice: Vec<f64> = (0..reps)
        .map(|i| {
            let path = sample_reflected_forest(h, &mut replicate_rng(8, "rk-forest", i)).unwrap();
            local_time_profile(&path).at_site(50)
        })
        .collect();
    let diffusion: Vec<f64> = (0..reps)
        .map(|i| feller_euler_maruyama(1.0, sigma, &[0.5], 1e-3, &mut replicate_rng(8, "rk-feller", i)).unwrap()[0])
        .collect();
    ks_two_sample(&EmpiricalSample::new(lattice), &EmpiricalSample::new(diffusion)).unwrap().1
}

#[test]
fn occupation_density_local_time_has_noise_scale_two() {
    assert!(compare(2.0) > 1e-3);
    assert!(compare(1.0) < 1e-6);
}
