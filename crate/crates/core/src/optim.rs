//! Preconditioned nonlinear conjugate gradients (PR+) with a strong-Wolfe
//! line search.

pub trait Objective {
    /// Value at `x`, gradient written into `grad`.
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64;
}

pub trait Preconditioner {
    /// `out = P⁻¹ r`.
    fn apply(&self, r: &[f64], out: &mut [f64]);
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], out: &mut [f64]) {
        out.copy_from_slice(r);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NcgOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for NcgOptions {
    fn default() -> Self {
        NcgOptions { max_iter: 2000, grad_tol: 1e-6, c1: 1e-4, c2: 0.1, max_line_search: 40 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NcgOutcome {
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Probe {
    alpha: f64,
    f: f64,
    d: f64,
}

struct Search<'a, O: Objective> {
    obj: &'a mut O,
    x: &'a [f64],
    dir: &'a [f64],
    trial: Vec<f64>,
    grad: Vec<f64>,
    best: Option<(f64, Vec<f64>, Vec<f64>)>,
    evals: usize,
}

impl<O: Objective> Search<'_, O> {
    fn probe(&mut self, alpha: f64) -> Probe {
        for ((t, x), d) in self.trial.iter_mut().zip(self.x).zip(self.dir) {
            *t = x + alpha * d;
        }
        let f = self.obj.eval(&self.trial, &mut self.grad);
        self.evals += 1;
        let d = dot(&self.grad, self.dir);
        if f.is_finite() && self.best.as_ref().is_none_or(|b| f < b.0) {
            self.best = Some((f, self.trial.clone(), self.grad.clone()));
        }
        Probe { alpha, f, d }
    }
}

fn cubic_min(a: &Probe, b: &Probe) -> Option<f64> {
    let d1 = a.d + b.d - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.d * b.d;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let t = b.alpha - (b.alpha - a.alpha) * (b.d + d2 - d1) / (b.d - a.d + 2.0 * d2);
    t.is_finite().then_some(t)
}

/// Outcome of a line search: accepted step, value and gradient at it.
type Accepted = (f64, Vec<f64>, Vec<f64>);

fn line_search<O: Objective>(
    obj: &mut O,
    x: &[f64],
    dir: &[f64],
    f0: f64,
    d0: f64,
    alpha0: f64,
    opts: &NcgOptions,
    evals: &mut usize,
) -> Option<Accepted> {
    let n = x.len();
    let mut s = Search { obj, x, dir, trial: vec![0.0; n], grad: vec![0.0; n], best: None, evals: 0 };
    let fuzz = 1e-13 * f0.abs().max(1e-300);
    // Values within `fuzz` of each other are treated as equal, which keeps the
    // search working once decreases reach rounding level.
    let rises = |p: &Probe| p.f > f0 + opts.c1 * p.alpha * d0 + fuzz;
    let accept = |p: &Probe| !rises(p) && p.d.abs() <= -opts.c2 * d0;
    let finish = |s: Search<'_, O>, evals: &mut usize, ok: bool| -> Option<Accepted> {
        *evals += s.evals;
        if !ok {
            return None;
        }
        let (f, xt, g) = s.best?;
        Some((f, xt, g))
    };

    let mut prev = Probe { alpha: 0.0, f: f0, d: d0 };
    let mut alpha = alpha0;
    let (mut lo, mut hi);
    let mut i = 0;
    loop {
        let p = s.probe(alpha);
        if !p.f.is_finite() {
            alpha *= 0.1;
            i += 1;
            if i >= opts.max_line_search {
                return finish(s, evals, false);
            }
            continue;
        }
        if accept(&p) {
            let xt = s.trial.clone();
            let g = s.grad.clone();
            *evals += s.evals;
            return Some((p.f, xt, g));
        }
        if rises(&p) || (i > 0 && p.f > prev.f + fuzz) {
            lo = prev;
            hi = p;
            break;
        }
        if p.d >= 0.0 {
            lo = p;
            hi = prev;
            break;
        }
        let next = (cubic_min(&prev, &p).unwrap_or(4.0 * p.alpha)).clamp(1.5 * p.alpha, 8.0 * p.alpha);
        prev = p;
        alpha = next;
        i += 1;
        if i >= opts.max_line_search {
            let ok = s.best.as_ref().is_some_and(|b| b.0 < f0);
            return finish(s, evals, ok);
        }
    }

    for _ in 0..opts.max_line_search {
        let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
        let width = b - a;
        if width <= 1e-16 * b.max(1e-300) {
            break;
        }
        let guess = cubic_min(&lo, &hi).unwrap_or(0.5 * (a + b));
        let alpha = guess.clamp(a + 0.1 * width, b - 0.1 * width);
        let p = s.probe(alpha);
        if accept(&p) {
            let xt = s.trial.clone();
            let g = s.grad.clone();
            *evals += s.evals;
            return Some((p.f, xt, g));
        }
        if !p.f.is_finite() || rises(&p) || p.f > lo.f + fuzz {
            hi = p;
        } else {
            if p.d * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = p;
        }
    }
    let ok = s.best.as_ref().is_some_and(|b| b.0 < f0);
    finish(s, evals, ok)
}

/// Minimises `obj` from `x` in place. Stops when `norm(grad) ≤ grad_tol`.
pub fn minimize_ncg<O, P, N>(obj: &mut O, pre: &P, x: &mut [f64], opts: &NcgOptions, norm: N) -> NcgOutcome
where
    O: Objective,
    P: Preconditioner + ?Sized,
    N: Fn(&[f64]) -> f64,
{
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut f = obj.eval(x, &mut g);
    let mut evals = 1;
    let mut z = vec![0.0; n];
    pre.apply(&g, &mut z);
    let mut d: Vec<f64> = z.iter().map(|v| -v).collect();
    let mut gz = dot(&g, &z);
    let mut last_step: Option<(f64, f64)> = None;
    let mut iterations = 0;
    let mut gn = norm(&g);
    let mut steepest = true;
    while iterations < opts.max_iter {
        if gn <= opts.grad_tol || n == 0 {
            return NcgOutcome { f, grad_norm: gn, iterations, evaluations: evals, converged: true };
        }
        let mut gd = dot(&g, &d);
        if !(gd < 0.0) {
            for (di, zi) in d.iter_mut().zip(&z) {
                *di = -zi;
            }
            gd = -gz;
            steepest = true;
            if !(gd < 0.0) {
                break;
            }
        }
        let alpha0 = match last_step {
            Some((a, prev_gd)) => (a * prev_gd / gd).clamp(1e-10, 1e3).min(if steepest { 1.0 } else { 1e3 }),
            None => 1.0,
        };
        match line_search(obj, x, &d, f, gd, alpha0, opts, &mut evals) {
            Some((fnew, xnew, gnew)) => {
                let alpha = {
                    let k = d.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).map(|(k, _)| k).unwrap_or(0);
                    if d[k] != 0.0 { (xnew[k] - x[k]) / d[k] } else { alpha0 }
                };
                x.copy_from_slice(&xnew);
                f = fnew;
                let mut znew = vec![0.0; n];
                pre.apply(&gnew, &mut znew);
                let gz_new = dot(&gnew, &znew);
                let mut num = gz_new;
                for i in 0..n {
                    num -= gnew[i] * z[i];
                }
                let beta = (num / gz).max(0.0);
                for i in 0..n {
                    d[i] = -znew[i] + beta * d[i];
                }
                last_step = Some((alpha, gd));
                g = gnew;
                z = znew;
                gz = gz_new;
                gn = norm(&g);
                steepest = beta == 0.0;
                iterations += 1;
            }
            None => {
                if steepest {
                    break;
                }
                for (di, zi) in d.iter_mut().zip(&z) {
                    *di = -zi;
                }
                steepest = true;
                last_step = None;
                iterations += 1;
            }
        }
    }
    NcgOutcome { f, grad_norm: gn, iterations, evaluations: evals, converged: gn <= opts.grad_tol }
}

/// Solves `(a·tridiag(−1, 2, −1) + c·I) x = r` for each of `stride`
/// interleaved components by the Thomas algorithm.
#[derive(Clone, Debug)]
pub struct TridiagonalPreconditioner {
    n: usize,
    stride: usize,
    off: f64,
    /// Modified diagonal from the forward sweep.
    cprime: Vec<f64>,
    inv_denom: Vec<f64>,
}

impl TridiagonalPreconditioner {
    pub fn new(n: usize, stride: usize, a: f64, c: f64) -> Self {
        let diag = 2.0 * a + c;
        let off = -a;
        let mut cprime = vec![0.0; n];
        let mut inv_denom = vec![0.0; n];
        let mut prev = 0.0;
        for i in 0..n {
            let denom = diag - off * prev;
            inv_denom[i] = 1.0 / denom;
            cprime[i] = off / denom;
            prev = cprime[i];
        }
        TridiagonalPreconditioner { n, stride, off, cprime, inv_denom }
    }
}

impl Preconditioner for TridiagonalPreconditioner {
    fn apply(&self, r: &[f64], out: &mut [f64]) {
        let (n, s) = (self.n, self.stride);
        for comp in 0..s {
            let mut prev = 0.0;
            for i in 0..n {
                let v = (r[i * s + comp] - self.off * prev) * self.inv_denom[i];
                out[i * s + comp] = v;
                prev = v;
            }
            for i in (0..n.saturating_sub(1)).rev() {
                out[i * s + comp] -= self.cprime[i] * out[(i + 1) * s + comp];
            }
        }
    }
}

/// `P + ρ u uᵀ` applied through Sherman–Morrison.
pub struct RankOneUpdate<'a, P: Preconditioner> {
    base: &'a P,
    w: Vec<f64>,
    coef: f64,
}

impl<'a, P: Preconditioner> RankOneUpdate<'a, P> {
    pub fn new(base: &'a P, u: &[f64], rho: f64) -> Self {
        let mut w = vec![0.0; u.len()];
        base.apply(u, &mut w);
        let s = dot(u, &w);
        let coef = if rho > 0.0 && s > 0.0 { rho / (1.0 + rho * s) } else { 0.0 };
        RankOneUpdate { base, w, coef }
    }
}

impl<P: Preconditioner> Preconditioner for RankOneUpdate<'_, P> {
    fn apply(&self, r: &[f64], out: &mut [f64]) {
        self.base.apply(r, out);
        if self.coef != 0.0 {
            let k = self.coef * dot(&self.w, r);
            for (o, w) in out.iter_mut().zip(&self.w) {
                *o -= k * w;
            }
        }
    }
}
