use mplkit::aft::{profile_loglik, CensoredDataset, GevAftParams};
use mplkit::dist::{gev_draw, GevParams3};
use mplkit::optim::{bracket_grid, maximize_inner, ols_start, FitOptions};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn simulate(n: usize, seed: u64) -> CensoredDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = GevParams3::new(0.0, 1.0, 2.0).unwrap();
    let shift = 3.1358773448028687;
    let mut y = Vec::with_capacity(n);
    let mut delta = Vec::with_capacity(n);
    let mut x = DMatrix::zeros(n, 2);
    for j in 0..n {
        let x2: f64 = rng.gen();
        x[(j, 0)] = 1.0;
        x[(j, 1)] = x2;
        let eta = 1.0 + x2;
        let t = eta + gev_draw(&noise, &mut rng);
        let c = shift + eta + gev_draw(&noise, &mut rng);
        y.push(t.min(c));
        delta.push(t <= c);
    }
    CensoredDataset::new(y, delta, x).unwrap()
}

fn main() {
    let d = simulate(30, 102);
    let opts = FitOptions::default();
    let grid = bracket_grid(opts.bracket, opts.grid_points);
    let (phi0, sigma0) = ols_start(&d);
    println!("ols start: phi=({:.4},{:.4}) sigma={:.4}", phi0[0], phi0[1], sigma0);
    let cold = GevAftParams::new(phi0, sigma0, grid[0]).unwrap();
    let mut warm: Option<GevAftParams> = None;
    println!(
        "{:>8} {:>14} {:>14} {:>9} {:>9} {:>34}",
        "xi", "warm_ll", "cold_ll", "warm_cv", "cold_cv", "warm (phi, sigma) / cold"
    );
    for &xi in &grid {
        let ws = warm.clone().unwrap_or_else(|| cold.clone());
        let fw = maximize_inner(xi, &d, &ws, &opts);
        if fw.converged {
            warm = Some(fw.params.clone());
        }
        let fc = maximize_inner(xi, &d, &cold, &opts);
        println!(
            "{:8.4} {:14.6} {:14.6} {:>9} {:>9}  w:({:.3},{:.3},{:.3}) c:({:.3},{:.3},{:.3})",
            xi,
            fw.loglik,
            fc.loglik,
            fw.converged,
            fc.converged,
            fw.params.phi[0],
            fw.params.phi[1],
            fw.params.sigma,
            fc.params.phi[0],
            fc.params.phi[1],
            fc.params.sigma,
        );
        let _ = profile_loglik(&fw.params, &d);
    }
}
