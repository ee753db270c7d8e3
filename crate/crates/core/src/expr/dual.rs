use std::ops::{Add, Div, Mul, Neg, Sub};

/// A value with its gradient with respect to the `k` map arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct DualValue {
    pub value: f64,
    pub partials: Vec<f64>,
}

impl DualValue {
    pub fn constant(value: f64, k: usize) -> Self {
        Self {
            value,
            partials: vec![0.0; k],
        }
    }

    /// The variable `x_{index+1}`, seeded with the unit vector `e_index`.
    pub fn variable(value: f64, index: usize, k: usize) -> Self {
        let mut partials = vec![0.0; k];
        partials[index] = 1.0;
        Self { value, partials }
    }

    pub fn is_constant(&self) -> bool {
        self.partials.iter().all(|&p| p == 0.0)
    }

    /// `h(self)` given `h(self.value)` and `h'(self.value)`.
    pub(crate) fn chain(self, value: f64, derivative: f64) -> Self {
        let mut partials = self.partials;
        for p in &mut partials {
            *p *= derivative;
        }
        Self { value, partials }
    }

    /// `value` with partials `wa * a' + wb * b'`.
    pub(crate) fn combine(value: f64, a: &Self, wa: f64, b: &Self, wb: f64) -> Self {
        let partials = a
            .partials
            .iter()
            .zip(&b.partials)
            .map(|(&pa, &pb)| {
                // skip the product when the weight is irrelevant, so that
                // an infinite weight on a zero partial does not produce NaN
                let ta = if pa == 0.0 { 0.0 } else { wa * pa };
                let tb = if pb == 0.0 { 0.0 } else { wb * pb };
                ta + tb
            })
            .collect();
        Self { value, partials }
    }

    pub fn exp(self) -> Self {
        let v = self.value.exp();
        self.chain(v, v)
    }

    pub fn ln(self) -> Self {
        let d = 1.0 / self.value;
        let v = self.value.ln();
        self.chain(v, d)
    }
}

impl Add for DualValue {
    type Output = DualValue;
    fn add(self, rhs: Self) -> Self {
        DualValue::combine(self.value + rhs.value, &self, 1.0, &rhs, 1.0)
    }
}

impl Sub for DualValue {
    type Output = DualValue;
    fn sub(self, rhs: Self) -> Self {
        DualValue::combine(self.value - rhs.value, &self, 1.0, &rhs, -1.0)
    }
}

impl Mul for DualValue {
    type Output = DualValue;
    fn mul(self, rhs: Self) -> Self {
        DualValue::combine(self.value * rhs.value, &self, rhs.value, &rhs, self.value)
    }
}

impl Div for DualValue {
    type Output = DualValue;
    fn div(self, rhs: Self) -> Self {
        let v = self.value / rhs.value;
        DualValue::combine(v, &self, 1.0 / rhs.value, &rhs, -v / rhs.value)
    }
}

impl Neg for DualValue {
    type Output = DualValue;
    fn neg(self) -> Self {
        let v = -self.value;
        self.chain(v, -1.0)
    }
}
