use rand::Rng;
use rand_distr::Exp1;

/// Uniform draw from the probability simplex with `k` coordinates (Dirichlet(1, …, 1)),
/// as normalized i.i.d. Exp(1) variables.
pub fn dirichlet_uniform<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    loop {
        let e: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let s: f64 = e.iter().sum();
        if s > 0.0 {
            return e.into_iter().map(|x| x / s).collect();
        }
    }
}
