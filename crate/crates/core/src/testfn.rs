//! Smooth and Lipschitz test functions with closed-form derivatives.

use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum TestFunction {
    Linear,
    Sin {
        omega: f64,
    },
    Cos {
        omega: f64,
    },
    /// `(x - c)_+`.
    Hinge {
        center: f64,
    },
    /// `(x - c)_+` with the corner replaced by a parabola of half-width `w`.
    SmoothHinge {
        center: f64,
        width: f64,
    },
    Scaled {
        factor: f64,
        inner: Box<TestFunction>,
    },
    Shifted {
        offset: f64,
        inner: Box<TestFunction>,
    },
}

impl TestFunction {
    pub fn scaled(self, factor: f64) -> Self {
        TestFunction::Scaled { factor, inner: Box::new(self) }
    }

    pub fn shifted(self, offset: f64) -> Self {
        TestFunction::Shifted { offset, inner: Box::new(self) }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TestFunction::Linear => x,
            TestFunction::Sin { omega } => (omega * x).sin(),
            TestFunction::Cos { omega } => (omega * x).cos(),
            TestFunction::Hinge { center } => (x - center).max(0.0),
            TestFunction::SmoothHinge { center, width } => {
                let z = x - center;
                if z <= -width {
                    0.0
                } else if z >= *width {
                    z
                } else {
                    (z + width) * (z + width) / (4.0 * width)
                }
            }
            TestFunction::Scaled { factor, inner } => factor * inner.eval(x),
            TestFunction::Shifted { offset, inner } => inner.eval(x) + offset,
        }
    }

    /// Derivative; right derivative at corners.
    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            TestFunction::Linear => 1.0,
            TestFunction::Sin { omega } => omega * (omega * x).cos(),
            TestFunction::Cos { omega } => -omega * (omega * x).sin(),
            TestFunction::Hinge { center } => {
                if x >= *center {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunction::SmoothHinge { center, width } => {
                let z = x - center;
                if z <= -width {
                    0.0
                } else if z >= *width {
                    1.0
                } else {
                    (z + width) / (2.0 * width)
                }
            }
            TestFunction::Scaled { factor, inner } => factor * inner.deriv(x),
            TestFunction::Shifted { inner, .. } => inner.deriv(x),
        }
    }

    /// Points where the derivative jumps.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            TestFunction::Hinge { center } => vec![*center],
            TestFunction::Scaled { inner, .. } | TestFunction::Shifted { inner, .. } => inner.kinks(),
            _ => Vec::new(),
        }
    }

    /// Lipschitz constant of the function.
    pub fn lipschitz(&self) -> f64 {
        match self {
            TestFunction::Linear | TestFunction::Hinge { .. } | TestFunction::SmoothHinge { .. } => 1.0,
            TestFunction::Sin { omega } | TestFunction::Cos { omega } => omega.abs(),
            TestFunction::Scaled { factor, inner } => factor.abs() * inner.lipschitz(),
            TestFunction::Shifted { inner, .. } => inner.lipschitz(),
        }
    }

    /// Lipschitz constant of the derivative; infinite at a corner.
    pub fn deriv_lipschitz(&self) -> f64 {
        match self {
            TestFunction::Linear => 0.0,
            TestFunction::Hinge { .. } => f64::INFINITY,
            TestFunction::SmoothHinge { width, .. } => 1.0 / (2.0 * width),
            TestFunction::Sin { omega } | TestFunction::Cos { omega } => omega * omega,
            TestFunction::Scaled { factor, inner } => factor.abs() * inner.deriv_lipschitz(),
            TestFunction::Shifted { inner, .. } => inner.deriv_lipschitz(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            TestFunction::Linear => "x".into(),
            TestFunction::Sin { omega } => format!("sin({omega}x)"),
            TestFunction::Cos { omega } => format!("cos({omega}x)"),
            TestFunction::Hinge { center } => format!("(x-{center})+"),
            TestFunction::SmoothHinge { center, width } => format!("smooth(x-{center})+[w={width}]"),
            TestFunction::Scaled { factor, inner } => format!("{factor}*{}", inner.name()),
            TestFunction::Shifted { offset, inner } => format!("{}{offset:+}", inner.name()),
        }
    }
}

/// Functions with `|h'| <= 1` and `|h''| <= 1`, plus smoothed hinges at the
/// given centers.
pub fn smooth_dictionary(centers: &[f64]) -> Vec<TestFunction> {
    let mut dict = vec![TestFunction::Linear];
    for omega in [1.0, 2.0] {
        let scale = 1.0 / (omega * omega);
        dict.push(TestFunction::Sin { omega }.scaled(scale));
        dict.push(TestFunction::Cos { omega }.scaled(scale));
    }
    for &c in centers {
        dict.push(TestFunction::SmoothHinge { center: c, width: 0.5 });
    }
    dict
}

/// Functions with Lipschitz constant 1/2.
pub fn half_lipschitz_dictionary() -> Vec<TestFunction> {
    let mut dict = vec![
        TestFunction::Linear.scaled(0.5),
        TestFunction::Sin { omega: 1.0 }.scaled(0.5),
        TestFunction::Cos { omega: 1.0 }.scaled(0.5),
        TestFunction::Sin { omega: 3.0 }.scaled(0.5 / 3.0),
    ];
    for c in [0.25, 0.5, 1.0] {
        dict.push(TestFunction::SmoothHinge { center: c, width: 0.25 }.scaled(0.5));
    }
    dict
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_slopes(h: &TestFunction) -> (f64, f64) {
        let step = 1e-3;
        let (mut l1, mut l2) = (0.0f64, 0.0f64);
        let mut x = -5.0;
        while x < 10.0 {
            l1 = l1.max(((h.eval(x + step) - h.eval(x)) / step).abs());
            l2 = l2.max(((h.deriv(x + step) - h.deriv(x)) / step).abs());
            x += step;
        }
        (l1, l2)
    }

    #[test]
    fn smooth_dictionary_is_in_unit_ball() {
        for h in smooth_dictionary(&[0.3, 1.0, 2.0]) {
            assert!(h.lipschitz() <= 1.0 && h.deriv_lipschitz() <= 1.0, "{}", h.name());
            let (l1, l2) = max_slopes(&h);
            assert!(l1 <= 1.0 + 1e-9 && l2 <= 1.0 + 1e-9, "{}: {l1} {l2}", h.name());
        }
    }

    #[test]
    fn half_lipschitz_dictionary_constants() {
        for h in half_lipschitz_dictionary() {
            assert!(h.lipschitz() <= 0.5 + 1e-15, "{}", h.name());
            assert!(max_slopes(&h).0 <= 0.5 + 1e-9, "{}", h.name());
        }
    }

    #[test]
    fn hinge_corner() {
        let h = TestFunction::Hinge { center: 0.5 };
        assert_eq!(h.eval(0.2), 0.0);
        assert_eq!(h.eval(1.5), 1.0);
        assert_eq!(h.kinks(), vec![0.5]);
        assert_eq!(h.clone().shifted(-0.25).eval(1.5), 0.75);
    }

    #[test]
    fn smooth_hinge_is_continuous() {
        let h = TestFunction::SmoothHinge { center: 1.0, width: 0.5 };
        assert!((h.eval(1.5) - 0.5).abs() < 1e-15);
        assert!(h.eval(0.5).abs() < 1e-15);
        assert!((h.deriv(1.0) - 0.5).abs() < 1e-15);
    }
}
