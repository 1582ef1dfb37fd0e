//! Neumaier-compensated accumulation for plain `f64` sums.

#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct NeumaierSum {
    s: f64,
    c: f64,
}

impl NeumaierSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.s + self.c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_small_terms_next_to_large_ones() {
        let mut s = NeumaierSum::default();
        for x in [1e100, 1.0, -1e100, 1.0] {
            s.add(x);
        }
        assert_eq!(s.value(), 2.0);
    }
}
