//! The guiding vector field, its weight strategies and the checks on them.

use rand::Rng;

use crate::calc3::{to_array, triple, Vec3};
use crate::connection::horizontal_velocity;
use crate::error::{Error, Result};
use crate::expr::{Expr, Func};
use crate::scene::{BaseDraw, Diagnostic, Frame, Scene};

/// Extra symbols available to weight expressions, after `x1, x2, x3`.
pub const WEIGHT_SYMBOLS: [&str; 4] = ["H", "lambda", "f", "g"];
const LAMBDA_SLOT: usize = 4;

/// Winding rate of the field per unit `a` and `beta(grad f x grad g)`, from the
/// factor 2 kept in `grad H`.
pub const WINDING_RATE: f64 = 2.0;

/// How the weights `(a, b)` are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSpec {
    /// `a = -lambda_beta`, `b = H`.
    Default,
    Custom {
        a: Expr,
        b: Expr,
    },
    /// `a` built from sampled bounds so that circling is guaranteed for the given `b`.
    Robust {
        b: Expr,
        eps0: f64,
        budget: usize,
    },
}

impl WeightSpec {
    /// Parses a custom pair; expressions may use `H`, `lambda`, `f` and `g`.
    pub fn custom(a: &str, b: &str) -> Result<Self> {
        Ok(Self::Custom { a: parse_weight(a)?, b: parse_weight(b)? })
    }

    pub fn robust(b: &str, eps0: f64, budget: usize) -> Result<Self> {
        if !(eps0 > 0.0) {
            return Err(Error::Invalid(format!("eps0 must be positive, got {eps0}")));
        }
        Ok(Self::Robust { b: parse_weight(b)?, eps0, budget })
    }
}

pub fn parse_weight(text: &str) -> Result<Expr> {
    Ok(Expr::parse_with(text, &WEIGHT_SYMBOLS)?)
}

fn default_pair() -> (Expr, Expr) {
    (parse_weight("-lambda").unwrap(), parse_weight("H").unwrap())
}

/// One evaluation of the field with its parts.
#[derive(Debug, Clone, Copy)]
pub struct FieldEval {
    pub frame: Frame,
    pub a: f64,
    pub b: f64,
    /// `a V x grad H`
    pub winding: Vec3,
    /// `b V x (T x grad H)`
    pub convergence: Vec3,
    pub x: Vec3,
}

impl FieldEval {
    /// `|beta(X)| / (|V| |X|)`, zero where the field vanishes.
    pub fn tangency_residual(&self) -> f64 {
        let v = self.frame.v_beta;
        let den = v.norm() * self.x.norm();
        if den == 0.0 {
            0.0
        } else {
            v.dot(&self.x).abs() / den
        }
    }
}

/// `X = a V x grad H + b V x (T x grad H)` over a scene.
#[derive(Debug, Clone)]
pub struct GuidingField<'s> {
    scene: &'s Scene,
    a: Expr,
    b: Expr,
    needs_lambda: bool,
}

impl<'s> GuidingField<'s> {
    /// Resolves `spec`; robust weights sample the tube with the scene's seed.
    pub fn new(scene: &'s Scene, spec: &WeightSpec) -> Result<Self> {
        let (a, b) = match spec {
            WeightSpec::Default => default_pair(),
            WeightSpec::Custom { a, b } => (a.clone(), b.clone()),
            WeightSpec::Robust { b, eps0, budget } => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(scene.numerics.rng_seed);
                match build_robust_weights(scene, b, *eps0, *budget, &mut rng)? {
                    WeightSpec::Custom { a, b } => (a, b),
                    _ => unreachable!(),
                }
            }
        };
        Ok(Self::from_exprs(scene, a, b))
    }

    pub fn from_exprs(scene: &'s Scene, a: Expr, b: Expr) -> Self {
        let needs_lambda = a.uses_var(LAMBDA_SLOT) || b.uses_var(LAMBDA_SLOT);
        Self { scene, a, b, needs_lambda }
    }

    pub fn scene(&self) -> &'s Scene {
        self.scene
    }

    pub fn weights(&self) -> (&Expr, &Expr) {
        (&self.a, &self.b)
    }

    /// Same `a`, `b` multiplied by `scale`.
    pub fn with_b_scale(&self, scale: f64) -> Self {
        let b = Expr::Mul(Box::new(Expr::num(scale)), Box::new(self.b.clone()));
        Self::from_exprs(self.scene, self.a.clone(), b)
    }

    /// The winding term alone (`b = 0`).
    pub fn winding_only(&self) -> Self {
        Self::from_exprs(self.scene, self.a.clone(), Expr::num(0.0))
    }

    /// `a` replaced by `-a`.
    pub fn flipped(&self) -> Self {
        Self::from_exprs(self.scene, Expr::Neg(Box::new(self.a.clone())), self.b.clone())
    }

    pub fn weights_at(&self, frame: &Frame) -> Result<(f64, f64)> {
        let lambda = if self.needs_lambda { self.scene.lambda(&frame.p)? } else { 0.0 };
        self.weights_with(frame, lambda)
    }

    fn weights_with(&self, frame: &Frame, lambda: f64) -> Result<(f64, f64)> {
        let vars = [frame.p.x, frame.p.y, frame.p.z, frame.h, lambda, frame.jet.f, frame.jet.g];
        Ok((self.a.eval_with(&vars)?, self.b.eval_with(&vars)?))
    }

    pub fn evaluate(&self, p: &Vec3) -> Result<FieldEval> {
        let frame = self.scene.frame(p)?;
        let (a, b) = self.weights_at(&frame)?;
        Ok(assemble(frame, a, b))
    }

    pub fn eval_field(&self, p: &Vec3) -> Result<Vec3> {
        Ok(self.evaluate(p)?.x)
    }

    pub fn winding_component(&self, p: &Vec3) -> Result<Vec3> {
        Ok(self.evaluate(p)?.winding)
    }

    pub fn convergence_component(&self, p: &Vec3) -> Result<Vec3> {
        Ok(self.evaluate(p)?.convergence)
    }

    /// `dH(X) = -b beta(T) |grad H|^2`, cross-checked against `grad H . X`.
    pub fn dh_along(&self, p: &Vec3) -> Result<f64> {
        let e = self.evaluate(p)?;
        let g2 = e.frame.grad_h.norm_squared();
        let beta_t = e.frame.v_beta.dot(&e.frame.t);
        let closed = -e.b * beta_t * g2;
        let direct = e.frame.grad_h.dot(&e.x);
        let v = e.frame.v_beta.norm();
        let scale = (e.b.abs() * e.frame.t.norm() + e.a.abs()) * v * g2;
        if (closed - direct).abs() > 1e-10 * scale + 1e-300 {
            return Err(Error::MismatchBug { closed, direct });
        }
        Ok(closed)
    }

    /// `X / |dphi(X)|` with `dphi = (f dg - g df) / H` in the `(f, g)` plane.
    pub fn time_rescale(&self, p: &Vec3) -> Result<Vec3> {
        let e = self.evaluate(p)?;
        let rate = base_angular_rate(&e.frame, &e.x);
        if !(rate.abs() >= 1e-9) {
            return Err(Error::RescaleSingular { rate: if rate.is_nan() { 0.0 } else { rate } });
        }
        Ok(e.x / rate.abs())
    }

    /// Sampled check of the sign, positivity and boundedness conditions.
    pub fn check_weights<R: Rng>(&self, budget: usize, rng: &mut R) -> WeightReport {
        check_weights(self, budget, rng)
    }
}

fn assemble(frame: Frame, a: f64, b: f64) -> FieldEval {
    let v = frame.v_beta;
    let winding = v.cross(&frame.grad_h) * a;
    let convergence = v.cross(&frame.t.cross(&frame.grad_h)) * b;
    FieldEval { frame, a, b, winding, convergence, x: winding + convergence }
}

/// `dphi(w)` for the base angle `phi = atan2(g, f)`; NaN on the path.
pub fn base_angular_rate(frame: &Frame, w: &Vec3) -> f64 {
    let df = frame.jet.grad_f.dot(w);
    let dg = frame.jet.grad_g.dot(w);
    (frame.jet.f * dg - frame.jet.g * df) / frame.h
}

/// Outcome of [`GuidingField::check_weights`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WeightReport {
    pub pass: bool,
    pub checks: Vec<Diagnostic>,
    /// Extremes of `a * lambda_beta`; circling needs this strictly negative.
    pub min_a_lambda: f64,
    pub max_a_lambda: f64,
    /// Smallest `b` over samples with `H > 1e-10`.
    pub min_b: f64,
    pub max_b_over_h: f64,
    /// Maxima of `b / H` per decade of `H` from `1e-8` to `1e-2`, innermost first.
    pub decade_maxima: Vec<f64>,
    /// Log-log slope of the decade maxima against `H`.
    pub slope: f64,
}

const BOUNDEDNESS_SPREAD: f64 = 1e3;
const BOUNDEDNESS_SLOPE: f64 = -0.1;

fn check_weights<R: Rng>(gf: &GuidingField, budget: usize, rng: &mut R) -> WeightReport {
    let scene = gf.scene;
    let samples = scene.sample_tube(rng, budget, BaseDraw::Disk);
    let nodes = (0..scene.polyline.len()).map(|i| scene.polyline.node(i));
    let mut min_al = f64::INFINITY;
    let mut max_al = f64::NEG_INFINITY;
    let mut min_b = f64::INFINITY;
    let mut max_ratio: f64 = 0.0;
    let mut sign_witnesses = Vec::new();
    let mut b_witnesses = Vec::new();
    let mut errors = 0usize;
    for p in samples.iter().map(|s| s.p).chain(nodes) {
        let eval = scene.frame(&p).and_then(|fr| {
            let lambda = scene.lambda(&p)?;
            let (a, b) = gf.weights_with(&fr, lambda)?;
            Ok((fr.h, a * lambda, b))
        });
        let Ok((h, al, b)) = eval else {
            errors += 1;
            continue;
        };
        min_al = min_al.min(al);
        max_al = max_al.max(al);
        if al >= 0.0 && sign_witnesses.len() < 8 {
            sign_witnesses.push(to_array(&p));
        }
        if h > 1e-10 {
            min_b = min_b.min(b);
            max_ratio = max_ratio.max(b / h);
            if !(b > 0.0) && b_witnesses.len() < 8 {
                b_witnesses.push(to_array(&p));
            }
        }
    }

    let per_decade = (budget / 6).max(32);
    let mut decade_maxima = Vec::new();
    let mut centers = Vec::new();
    for k in 0..6 {
        let lo = 10f64.powi(-8 + k);
        let hi = lo * 10.0;
        let pts = scene.sample_tube(rng, per_decade, BaseDraw::LogAnnulus { lo, hi });
        let mut m: f64 = 0.0;
        for s in &pts {
            if let Ok(fr) = scene.frame(&s.p) {
                if let Ok((_, b)) = gf.weights_at(&fr) {
                    m = m.max(b / fr.h);
                }
            }
        }
        decade_maxima.push(m);
        centers.push((lo * hi).sqrt());
    }
    let (spread, slope) = if decade_maxima.iter().all(|&m| m > 0.0 && m.is_finite()) {
        let hi = decade_maxima.iter().cloned().fold(0.0, f64::max);
        let lo = decade_maxima.iter().cloned().fold(f64::INFINITY, f64::min);
        let xs: Vec<f64> = centers.iter().map(|c| c.ln()).collect();
        let ys: Vec<f64> = decade_maxima.iter().map(|m| m.ln()).collect();
        (hi / lo, linear_fit(&xs, &ys).0)
    } else if decade_maxima.iter().all(|&m| m == 0.0) {
        (1.0, 0.0)
    } else {
        (f64::INFINITY, f64::NEG_INFINITY)
    };

    let checks = vec![
        Diagnostic {
            name: "weight_sign".into(),
            pass: max_al < 0.0 && errors == 0,
            measured: max_al,
            threshold: 0.0,
            detail: format!("a*lambda_beta in [{min_al:e}, {max_al:e}]; circling needs it negative"),
            witnesses: sign_witnesses,
        },
        Diagnostic {
            name: "b_positive".into(),
            pass: min_b > 0.0,
            measured: min_b,
            threshold: 0.0,
            detail: "min b over tube samples with H > 1e-10".into(),
            witnesses: b_witnesses,
        },
        Diagnostic {
            name: "b_over_h_bounded".into(),
            pass: spread < BOUNDEDNESS_SPREAD && slope > BOUNDEDNESS_SLOPE && max_ratio.is_finite(),
            measured: spread,
            threshold: BOUNDEDNESS_SPREAD,
            detail: format!(
                "decade maxima of b/H spread {spread:e}, log-log slope {slope:.3} (must exceed {BOUNDEDNESS_SLOPE})"
            ),
            witnesses: Vec::new(),
        },
    ];
    WeightReport {
        pass: checks.iter().all(|c| c.pass),
        checks,
        min_a_lambda: min_al,
        max_a_lambda: max_al,
        min_b,
        max_b_over_h: max_ratio,
        decade_maxima,
        slope,
    }
}

/// Least-squares line `y = slope x + c`; returns `(slope, intercept, r2)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

/// Sampled supremum used by the robust weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustEstimate {
    pub sup: f64,
    /// Per-annulus maxima, `k = 1` (outermost) first.
    pub annuli: Vec<f64>,
    /// Sign given to `a`: opposite to `lambda_beta`.
    pub sign: f64,
}

/// Samples `|det(grad H, T, r)| / |det(T, phi, r)|` over `H`-annuli
/// `[delta^2 / 2^k, delta^2 / 2^(k-1)]`, `k = 1..12`, where `r` and `phi` are the
/// horizontal lifts of the base fields `(f, g)` and `(-g, f)`.
pub fn robust_supremum<R: Rng>(scene: &Scene, budget: usize, rng: &mut R) -> Result<RobustEstimate> {
    let d2 = scene.delta() * scene.delta();
    let per = (budget / 12).max(16);
    let mut annuli = Vec::with_capacity(12);
    let mut sign = 0.0;
    for k in 1..=12 {
        let lo = d2 / 2f64.powi(k);
        let pts = scene.sample_tube(rng, per, BaseDraw::Annulus { lo, hi: 2.0 * lo });
        if pts.len() < per / 2 {
            return Err(Error::InsufficientSamples { have: pts.len(), need: per });
        }
        let mut m: f64 = 0.0;
        for s in &pts {
            let fr = scene.frame(&s.p)?;
            let (f, g) = (fr.jet.f, fr.jet.g);
            let r = horizontal_velocity(scene, &s.p, [f, g])?;
            let phi = horizontal_velocity(scene, &s.p, [-g, f])?;
            let num = triple(&fr.grad_h, &fr.t, &r).abs();
            let den = triple(&fr.t, &phi, &r).abs();
            m = m.max(num / den);
            let l = scene.lambda(&s.p)?;
            let sg = -l.signum();
            if sign == 0.0 {
                sign = sg;
            } else if sg != sign {
                return Err(Error::Precondition("lambda_beta changes sign in the tube".into()));
            }
        }
        annuli.push(m);
    }
    let inner = &annuli[9..];
    let hi = inner.iter().cloned().fold(0.0, f64::max);
    let lo = inner.iter().cloned().fold(f64::INFINITY, f64::min);
    if !hi.is_finite() || (hi > 0.0 && hi > 10.0 * lo) {
        return Err(Error::SupremumUnstable { annuli });
    }
    let sup = annuli.iter().cloned().fold(0.0, f64::max);
    Ok(RobustEstimate { sup, annuli, sign })
}

/// `a = sign * ((|b| / 2) S + eps0)` with `S` from [`robust_supremum`].
pub fn build_robust_weights<R: Rng>(
    scene: &Scene,
    b: &Expr,
    eps0: f64,
    budget: usize,
    rng: &mut R,
) -> Result<WeightSpec> {
    if !(eps0 > 0.0) {
        return Err(Error::Invalid(format!("eps0 must be positive, got {eps0}")));
    }
    let report = scene.check_assumptions(rng);
    if !report.passed() {
        let failed: Vec<_> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        return Err(Error::Precondition(format!("scene fails assumption checks: {}", failed.join(", "))));
    }
    let est = robust_supremum(scene, budget, rng)?;
    let abs_b = Expr::Call(Func::Sqrt, Box::new(Expr::Pow(Box::new(b.clone()), 2.0)));
    let scaled = Expr::Mul(Box::new(Expr::num(est.sup / WINDING_RATE)), Box::new(abs_b));
    let inner = Expr::Add(Box::new(scaled), Box::new(Expr::num(eps0)));
    let a = Expr::Mul(Box::new(Expr::num(est.sign)), Box::new(inner));
    Ok(WeightSpec::Custom { a, b: b.clone() })
}
