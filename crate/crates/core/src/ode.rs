//! Explicit embedded Runge-Kutta integrators (Dormand-Prince 5(4) and 8(5,3))
//! for complex linear systems, sharing one adaptive step-size driver.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Embedded pair used by the adaptive driver.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Scheme {
    /// Dormand-Prince 5(4), 7 stages with first-same-as-last.
    Dopri5,
    /// Dormand-Prince 8(5,3), 12 stages.
    #[default]
    Dop853,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub scheme: Scheme,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

mod dopri5 {
    pub const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    pub const A: [&[f64]; 7] = [
        &[],
        &[1.0 / 5.0],
        &[3.0 / 40.0, 9.0 / 40.0],
        &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
        &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
        &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
        &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    /// Difference between the 5th- and 4th-order weights.
    pub const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
}

mod dop853 {
    pub const C: [f64; 12] = [
        0.0,
        0.526001519587677318785587544488e-1,
        0.789002279381515978178381316732e-1,
        0.118350341907227396726757197510,
        0.281649658092772603273242802490,
        0.333333333333333333333333333333,
        0.25,
        0.307692307692307692307692307692,
        0.651282051282051282051282051282,
        0.6,
        0.857142857142857142857142857142,
        1.0,
    ];
    pub const A: [&[f64]; 12] = [
        &[],
        &[5.26001519587677318785587544488e-2],
        &[1.97250569845378994544595329183e-2, 5.91751709536136983633785987549e-2],
        &[2.95875854768068491816892993775e-2, 0.0, 8.87627564304205475450678981324e-2],
        &[
            2.41365134159266685502369798665e-1,
            0.0,
            -8.84549479328286085344864962717e-1,
            9.24834003261792003115737966543e-1,
        ],
        &[
            3.7037037037037037037037037037e-2,
            0.0,
            0.0,
            1.70828608729473871279604482173e-1,
            1.25467687566822425016691814123e-1,
        ],
        &[
            3.7109375e-2,
            0.0,
            0.0,
            1.70252211019544039314978060272e-1,
            6.02165389804559606850219397283e-2,
            -1.7578125e-2,
        ],
        &[
            3.70920001185047927108779319836e-2,
            0.0,
            0.0,
            1.70383925712239993810214054705e-1,
            1.07262030446373284651809199168e-1,
            -1.53194377486244017527936158236e-2,
            8.27378916381402288758473766002e-3,
        ],
        &[
            6.24110958716075717114429577812e-1,
            0.0,
            0.0,
            -3.36089262944694129406857109825,
            -8.68219346841726006818189891453e-1,
            2.75920996994467083049415600797e1,
            2.01540675504778934086186788979e1,
            -4.34898841810699588477366255144e1,
        ],
        &[
            4.77662536438264365890433908527e-1,
            0.0,
            0.0,
            -2.48811461997166764192642586468,
            -5.90290826836842996371446475743e-1,
            2.12300514481811942347288949897e1,
            1.52792336328824235832596922938e1,
            -3.32882109689848629194453265587e1,
            -2.03312017085086261358222928593e-2,
        ],
        &[
            -9.3714243008598732571704021658e-1,
            0.0,
            0.0,
            5.18637242884406370830023853209,
            1.09143734899672957818500254654,
            -8.14978701074692612513997267357,
            -1.85200656599969598641566180701e1,
            2.27394870993505042818970056734e1,
            2.49360555267965238987089396762,
            -3.0467644718982195003823669022,
        ],
        &[
            2.27331014751653820792359768449,
            0.0,
            0.0,
            -1.05344954667372501984066689879e1,
            -2.00087205822486249909675718444,
            -1.79589318631187989172765950534e1,
            2.79488845294199600508499808837e1,
            -2.85899827713502369474065508674,
            -8.87285693353062954433549289258,
            1.23605671757943030647266201528e1,
            6.43392746015763530355970484046e-1,
        ],
    ];
    pub const B: [f64; 12] = [
        5.42937341165687622380535766363e-2,
        0.0,
        0.0,
        0.0,
        0.0,
        4.45031289275240888144113950566,
        1.89151789931450038304281599044,
        -5.8012039600105847814672114227,
        3.1116436695781989440891606237e-1,
        -1.52160949662516078556178806805e-1,
        2.01365400804030348374776537501e-1,
        4.47106157277725905176885569043e-2,
    ];
    /// Third-order weights on stages 1, 9 and 12.
    pub const BHH: [f64; 3] = [
        0.244094488188976377952755905512,
        0.733846688281611857341361741547,
        0.220588235294117647058823529412e-1,
    ];
    /// Difference between the 8th- and 5th-order weights.
    pub const E: [f64; 12] = [
        0.1312004499419488073250102996e-1,
        0.0,
        0.0,
        0.0,
        0.0,
        -0.1225156446376204440720569753e1,
        -0.4957589496572501915214079952,
        0.1664377182454986536961530415e1,
        -0.3503288487499736816886487290,
        0.3341791187130174790297318841,
        0.8192320648511571246570742613e-1,
        -0.2235530786388629525884427845e-1,
    ];
}

/// Stage storage plus one step of a tableau.
struct Stepper {
    scheme: Scheme,
    k: Vec<Vec<C64>>,
    tmp: Vec<C64>,
}

impl Stepper {
    fn new(scheme: Scheme, n: usize) -> Self {
        let stages = match scheme {
            Scheme::Dopri5 => 7,
            Scheme::Dop853 => 12,
        };
        let zero = C64::new(0.0, 0.0);
        Stepper {
            scheme,
            k: (0..stages).map(|_| vec![zero; n]).collect(),
            tmp: vec![zero; n],
        }
    }

    fn order(&self) -> f64 {
        match self.scheme {
            Scheme::Dopri5 => 5.0,
            Scheme::Dop853 => 8.0,
        }
    }

    #[allow(clippy::too_many_arguments, clippy::needless_range_loop)]
    fn stages<F>(&mut self, f: &mut F, t: f64, h: f64, y: &[C64], c: &[f64], a: &[&[f64]], from: usize)
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        for s in from..c.len() {
            for i in 0..y.len() {
                let mut acc = C64::new(0.0, 0.0);
                for (j, &aij) in a[s].iter().enumerate() {
                    if aij != 0.0 {
                        acc += self.k[j][i] * aij;
                    }
                }
                self.tmp[i] = y[i] + acc * h;
            }
            let (_, rest) = self.k.split_at_mut(s);
            f(t + c[s] * h, &self.tmp, &mut rest[0]);
        }
    }

    /// Advances `y` by `h` into `y_new` (with `k[0] = f(t, y)` already
    /// filled) and returns the scaled error norm and the number of new
    /// derivative evaluations.
    #[allow(clippy::needless_range_loop)]
    fn step<F>(&mut self, f: &mut F, t: f64, h: f64, y: &[C64], y_new: &mut [C64], control: &StepControl) -> (f64, usize)
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        let n = y.len();
        let scale = |i: usize, y_new: &[C64]| control.atol + control.rtol * y[i].norm().max(y_new[i].norm());
        match self.scheme {
            Scheme::Dopri5 => {
                self.stages(f, t, h, y, &dopri5::C[..6], &dopri5::A, 1);
                for i in 0..n {
                    let mut acc = C64::new(0.0, 0.0);
                    for (j, &b) in dopri5::A[6].iter().enumerate() {
                        acc += self.k[j][i] * b;
                    }
                    y_new[i] = y[i] + acc * h;
                }
                f(t + h, y_new, &mut self.k[6]);
                let mut err_sq = 0.0;
                for i in 0..n {
                    let mut e = C64::new(0.0, 0.0);
                    for (j, &ej) in dopri5::E.iter().enumerate() {
                        e += self.k[j][i] * ej;
                    }
                    err_sq += (e.norm() * h / scale(i, y_new)).powi(2);
                }
                ((err_sq / n as f64).sqrt(), 6)
            }
            Scheme::Dop853 => {
                self.stages(f, t, h, y, &dop853::C, &dop853::A, 1);
                let mut err5 = 0.0;
                let mut err3 = 0.0;
                let mut slopes = vec![C64::new(0.0, 0.0); n];
                for (i, slope) in slopes.iter_mut().enumerate() {
                    let mut acc = C64::new(0.0, 0.0);
                    for (j, &b) in dop853::B.iter().enumerate() {
                        if b != 0.0 {
                            acc += self.k[j][i] * b;
                        }
                    }
                    *slope = acc;
                    y_new[i] = y[i] + acc * h;
                }
                for i in 0..n {
                    let sk = scale(i, y_new);
                    let e3 = slopes[i]
                        - self.k[0][i] * dop853::BHH[0]
                        - self.k[8][i] * dop853::BHH[1]
                        - self.k[11][i] * dop853::BHH[2];
                    let mut e5 = C64::new(0.0, 0.0);
                    for (j, &ej) in dop853::E.iter().enumerate() {
                        if ej != 0.0 {
                            e5 += self.k[j][i] * ej;
                        }
                    }
                    err3 += (e3.norm() / sk).powi(2);
                    err5 += (e5.norm() / sk).powi(2);
                }
                let mut deno = err5 + 0.01 * err3;
                if deno <= 0.0 {
                    deno = 1.0;
                }
                (h.abs() * err5 * (1.0 / (n as f64 * deno)).sqrt(), 11)
            }
        }
    }

    /// Moves `f(t + h, y_new)` into the first stage when the scheme already
    /// computed it; otherwise reports that it must be evaluated.
    fn reuse_last(&mut self) -> bool {
        match self.scheme {
            Scheme::Dopri5 => {
                self.k.swap(0, 6);
                true
            }
            Scheme::Dop853 => false,
        }
    }
}

/// Integrates `dy/dt = f(t, y)` from `t0` to `t1` in place.
///
/// `on_accept` runs after every accepted step and may modify the state; it
/// returns `true` when it did, which forces a fresh derivative evaluation.
pub fn integrate<F, A>(
    mut f: F,
    t0: f64,
    t1: f64,
    y: &mut [C64],
    control: StepControl,
    mut on_accept: A,
) -> Result<OdeStats>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    A: FnMut(f64, &mut [C64]) -> Result<bool>,
{
    let n = y.len();
    let mut stats = OdeStats::default();
    if t1 <= t0 || n == 0 {
        return Ok(stats);
    }
    let mut stepper = Stepper::new(control.scheme, n);
    let mut y_new = vec![C64::new(0.0, 0.0); n];
    let expo = 1.0 / stepper.order();

    let mut t = t0;
    let mut h = control.initial_step.min(control.max_step).min(t1 - t0);
    let min_step = 1e-14 * (t0.abs().max(t1.abs()).max(1.0));

    f(t, y, &mut stepper.k[0]);
    stats.evaluations += 1;

    while t < t1 {
        if t + h > t1 {
            h = t1 - t;
        }
        if h < min_step && t1 - t > min_step {
            return Err(Error::StepUnderflow { time: t });
        }
        let (err, evals) = stepper.step(&mut f, t, h, y, &mut y_new, &control);
        stats.evaluations += evals;

        if err <= 1.0 {
            t = if t1 - (t + h) < min_step { t1 } else { t + h };
            y.copy_from_slice(&y_new);
            stats.accepted += 1;
            let modified = on_accept(t, y)?;
            if modified || !stepper.reuse_last() {
                f(t, y, &mut stepper.k[0]);
                stats.evaluations += 1;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-expo)).clamp(0.2, 5.0) };
            h = (h * factor).min(control.max_step);
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-expo)).clamp(0.1, 1.0);
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn control(scheme: Scheme) -> StepControl {
        StepControl {
            rtol: 1e-10,
            atol: 1e-12,
            initial_step: 0.01,
            max_step: 0.1,
            scheme,
        }
    }

    const SCHEMES: [Scheme; 2] = [Scheme::Dopri5, Scheme::Dop853];

    #[test]
    fn harmonic_rotation() {
        // y' = -i w y  =>  y(t) = exp(-i w t)
        let w = 3.0;
        for scheme in SCHEMES {
            let mut y = vec![C64::new(1.0, 0.0)];
            integrate(
                |_, y, dy| dy[0] = C64::new(0.0, -w) * y[0],
                0.0,
                10.0,
                &mut y,
                control(scheme),
                |_, _| Ok(false),
            )
            .unwrap();
            let exact = C64::from_polar(1.0, -w * 10.0);
            assert!((y[0] - exact).norm() < 1e-8, "{scheme:?} {}", (y[0] - exact).norm());
        }
    }

    #[test]
    fn time_dependent_decay() {
        // y' = -2 t y  =>  y = exp(-t^2)
        for scheme in SCHEMES {
            let mut y = vec![C64::new(1.0, 0.0)];
            integrate(
                |t, y, dy| dy[0] = y[0] * (-2.0 * t),
                0.0,
                2.0,
                &mut y,
                control(scheme),
                |_, _| Ok(false),
            )
            .unwrap();
            assert!((y[0].re - (-4f64).exp()).abs() < 1e-10, "{scheme:?}");
        }
    }

    fn fixed_step_error(scheme: Scheme, steps: usize) -> f64 {
        // y' = i cos(t) y  =>  y = exp(i sin t)
        let mut f = |t: f64, y: &[C64], dy: &mut [C64]| dy[0] = C64::new(0.0, t.cos()) * y[0];
        let mut stepper = Stepper::new(scheme, 1);
        let ctl = control(scheme);
        let t1 = 2.0;
        let h = t1 / steps as f64;
        let mut y = vec![C64::new(1.0, 0.0)];
        let mut y_new = y.clone();
        for s in 0..steps {
            let t = s as f64 * h;
            f(t, &y, &mut stepper.k[0]);
            stepper.step(&mut f, t, h, &y, &mut y_new, &ctl);
            y.copy_from_slice(&y_new);
        }
        (y[0] - C64::from_polar(1.0, t1.sin())).norm()
    }

    #[test]
    fn convergence_orders() {
        let ratio5 = fixed_step_error(Scheme::Dopri5, 20) / fixed_step_error(Scheme::Dopri5, 40);
        assert!((ratio5.log2() - 5.0).abs() < 0.4, "dopri5 order {}", ratio5.log2());
        let ratio8 = fixed_step_error(Scheme::Dop853, 8) / fixed_step_error(Scheme::Dop853, 16);
        assert!((ratio8.log2() - 8.0).abs() < 0.6, "dop853 order {}", ratio8.log2());
    }

    #[test]
    fn accept_hook_runs_and_can_abort() {
        for scheme in SCHEMES {
            let mut y = vec![C64::new(1.0, 0.0)];
            let mut calls = 0;
            let err = integrate(
                |_, y, dy| dy[0] = y[0],
                0.0,
                5.0,
                &mut y,
                control(scheme),
                |t, _| {
                    calls += 1;
                    if t > 1.0 {
                        Err(Error::StepUnderflow { time: t })
                    } else {
                        Ok(false)
                    }
                },
            );
            assert!(err.is_err());
            assert!(calls > 1);
        }
    }
}
