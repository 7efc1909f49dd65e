/// Step-size controller family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ControllerKind {
    #[default]
    I,
    PI,
    PID,
}

impl ControllerKind {
    /// Exponent gains per unit order, applied to the current error and the
    /// two previous accepted errors.
    fn gains(self) -> [f64; 3] {
        match self {
            ControllerKind::I => [1.0, 0.0, 0.0],
            ControllerKind::PI => [0.7, -0.4, 0.0],
            // H312PID
            ControllerKind::PID => [1.0 / 18.0, 1.0 / 9.0, 1.0 / 18.0],
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "i" => Ok(ControllerKind::I),
            "pi" => Ok(ControllerKind::PI),
            "pid" => Ok(ControllerKind::PID),
            other => Err(format!(
                "unknown controller '{other}' (expected i, pi or pid)"
            )),
        }
    }
}

/// Proposes step sizes from scaled errors, `h_new = C(h, e)`.
///
/// For order `p` the proposal is
/// `h * clamp(safety * e_n^(-b1/(p+1)) * e_{n-1}^(-b2/(p+1)) * e_{n-2}^(-b3/(p+1)), q_min, q_max)`
/// where `e_{n-1}`, `e_{n-2}` are the errors of the two most recently
/// accepted steps (initially 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub kind: ControllerKind,
    pub safety: f64,
    pub q_min: f64,
    pub q_max: f64,
    history: [f64; 2],
}

impl Default for Controller {
    fn default() -> Self {
        Controller::new(ControllerKind::I)
    }
}

impl Controller {
    pub fn new(kind: ControllerKind) -> Self {
        Controller {
            kind,
            safety: 0.9,
            q_min: 0.2,
            q_max: 5.0,
            history: [1.0, 1.0],
        }
    }

    /// Overrides the clamp factors. Requires `0 < q_min < 1 < q_max`.
    pub fn with_limits(mut self, q_min: f64, q_max: f64) -> Self {
        assert!(
            0.0 < q_min && q_min < 1.0 && 1.0 < q_max,
            "invalid controller limits"
        );
        self.q_min = q_min;
        self.q_max = q_max;
        self
    }

    pub fn with_safety(mut self, safety: f64) -> Self {
        assert!(
            safety > 0.0 && safety < 1.0,
            "safety factor must lie in (0, 1)"
        );
        self.safety = safety;
        self
    }

    pub fn history(&self) -> [f64; 2] {
        self.history
    }

    /// Step-size factor for an accepted step of order `p` with error `e`.
    pub fn factor(&self, e: f64, p: usize) -> f64 {
        if e.is_nan() {
            return self.q_min;
        }
        let k = (p + 1) as f64;
        let [b1, b2, b3] = self.kind.gains();
        let floor = |x: f64| x.max(f64::MIN_POSITIVE);
        let raw = self.safety
            * floor(e).powf(-b1 / k)
            * floor(self.history[0]).powf(-b2 / k)
            * floor(self.history[1]).powf(-b3 / k);
        if raw.is_nan() {
            return self.q_min;
        }
        raw.clamp(self.q_min, self.q_max)
    }

    /// Proposed next step after an accepted step of size `h`.
    pub fn propose(&self, h: f64, e: f64, p: usize) -> f64 {
        h * self.factor(e, p)
    }

    /// Shrunken step after a rejection: the integral rule capped at 1.
    pub fn reject(&self, h: f64, e: f64, p: usize) -> f64 {
        let raw = self.safety * e.powf(-1.0 / (p + 1) as f64);
        let factor = if raw.is_nan() {
            self.q_min
        } else {
            raw.clamp(self.q_min, 1.0)
        };
        h * factor
    }

    /// Records the error of an accepted step.
    pub fn accept(&mut self, e: f64) {
        self.history = [e, self.history[0]];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integral_controller_examples() {
        let c = Controller::new(ControllerKind::I);
        assert!((c.propose(2.0, 1.0, 4) - 1.8).abs() < 1e-15);
        assert_eq!(c.propose(2.0, 0.0, 4), 10.0);
        // e = 2^6 at p = 5 gives 0.9 / 2
        assert!((c.factor(64.0, 5) - 0.45).abs() < 1e-15);
        assert_eq!(c.factor(1e12, 5), 0.2);
        assert_eq!(c.factor(f64::INFINITY, 5), 0.2);
        assert_eq!(c.factor(f64::NAN, 5), 0.2);
    }

    #[test]
    fn rejection_never_grows() {
        let c = Controller::new(ControllerKind::I);
        assert_eq!(
            c.reject(1.0, 1.0 + 1e-12, 3),
            0.9 * (1.0f64 + 1e-12).powf(-0.25)
        );
        assert_eq!(c.reject(1.0, 1e30, 3), 0.2);
        assert!(c.reject(1.0, 1.0000001, 8) < 1.0);
    }

    #[test]
    fn memory_changes_only_on_accept() {
        let mut c = Controller::new(ControllerKind::PI);
        let before = c.factor(0.5, 4);
        let _ = c.propose(1.0, 0.5, 4);
        let _ = c.reject(1.0, 3.0, 4);
        assert_eq!(c.history(), [1.0, 1.0]);
        c.accept(0.5);
        assert_eq!(c.history(), [0.5, 1.0]);
        // a small previous error damps growth for PI
        assert!(c.factor(0.5, 4) < before);
    }

    #[test]
    fn pi_with_unit_history_matches_scaled_integral() {
        let c = Controller::new(ControllerKind::PI);
        let want = 0.9 * 0.3f64.powf(-0.7 / 5.0);
        assert!((c.factor(0.3, 4) - want).abs() < 1e-15);
    }

    #[test]
    fn pid_uses_three_errors() {
        let mut c = Controller::new(ControllerKind::PID);
        c.accept(0.1);
        c.accept(0.2);
        assert_eq!(c.history(), [0.2, 0.1]);
        let k = 5.0;
        let want = 0.9
            * 0.4f64.powf(-1.0 / 18.0 / k)
            * 0.2f64.powf(-1.0 / 9.0 / k)
            * 0.1f64.powf(-1.0 / 18.0 / k);
        assert!((c.factor(0.4, 4) - want).abs() < 1e-15);
    }

    #[test]
    fn parse_kind() {
        assert_eq!("PI".parse::<ControllerKind>().unwrap(), ControllerKind::PI);
        assert!("pd".parse::<ControllerKind>().is_err());
    }
}
