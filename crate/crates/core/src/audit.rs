//! Multiplication audit counters.
//!
//! Every multiplication on the learning datapath goes through one of the
//! wrappers here so tests can assert where multiplications happen. The
//! counters are per thread: training is sequential, and concurrently running
//! tests or evaluation workers must not pollute each other's tallies.

use std::cell::Cell;

thread_local! {
    static FLOAT_MULS: Cell<u64> = const { Cell::new(0) };
    static INT_SCALAR_PRODUCTS: Cell<u64> = const { Cell::new(0) };
}

/// Snapshot of the multiplication counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MulCounts {
    pub float_muls: u64,
    pub int_scalar_products: u64,
}

impl MulCounts {
    pub fn total(&self) -> u64 {
        self.float_muls + self.int_scalar_products
    }

    pub fn since(&self, earlier: MulCounts) -> MulCounts {
        MulCounts {
            float_muls: self.float_muls - earlier.float_muls,
            int_scalar_products: self.int_scalar_products - earlier.int_scalar_products,
        }
    }
}

pub fn reset() {
    FLOAT_MULS.with(|c| c.set(0));
    INT_SCALAR_PRODUCTS.with(|c| c.set(0));
}

pub fn snapshot() -> MulCounts {
    MulCounts {
        float_muls: FLOAT_MULS.with(Cell::get),
        int_scalar_products: INT_SCALAR_PRODUCTS.with(Cell::get),
    }
}

/// Total number of multiplications executed on this thread since the last
/// [`reset`].
pub fn mul_count_audit() -> u64 {
    snapshot().total()
}

/// Counted floating-point multiplication.
#[inline]
pub fn fmul(a: f64, b: f64) -> f64 {
    FLOAT_MULS.with(|c| c.set(c.get() + 1));
    a * b
}

#[inline]
pub(crate) fn record_int_scalar_product() {
    INT_SCALAR_PRODUCTS.with(|c| c.set(c.get() + 1));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_after_reset() {
        reset();
        assert_eq!(mul_count_audit(), 0);
        assert_eq!(snapshot(), MulCounts::default());
    }

    #[test]
    fn counts_float_muls() {
        reset();
        assert_eq!(fmul(2.0, 3.0), 6.0);
        assert_eq!(fmul(0.5, 4.0), 2.0);
        let counts = snapshot();
        assert_eq!(counts.float_muls, 2);
        assert_eq!(counts.int_scalar_products, 0);
    }

    #[test]
    fn counters_are_thread_local() {
        reset();
        fmul(1.0, 1.0);
        std::thread::spawn(|| {
            assert_eq!(mul_count_audit(), 0);
            fmul(1.0, 1.0);
        })
        .join()
        .unwrap();
        assert_eq!(mul_count_audit(), 1);
    }
}
