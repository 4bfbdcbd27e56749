/// Lazy L1 step: moves `stepped` toward zero by `penalty`, stopping at zero.
///
/// The result is exactly `0.0` whenever the shrink reaches or crosses zero, and
/// otherwise keeps the sign of `stepped`.
#[inline]
pub fn l1_clip_step(stepped: f64, penalty: f64) -> f64 {
    if stepped > 0.0 {
        let v = stepped - penalty;
        if v > 0.0 {
            v
        } else {
            0.0
        }
    } else if stepped < 0.0 {
        let v = stepped + penalty;
        if v < 0.0 {
            v
        } else {
            0.0
        }
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(l1_clip_step(0.5, 0.2), 0.3);
        assert_eq!(l1_clip_step(-0.5, 0.2), -0.3);
        assert_eq!(l1_clip_step(0.1, 0.2), 0.0);
        assert_eq!(l1_clip_step(-0.1, 0.2), 0.0);
        assert_eq!(l1_clip_step(0.2, 0.2), 0.0);
        assert_eq!(l1_clip_step(0.0, 0.0), 0.0);
        assert_eq!(l1_clip_step(0.7, 0.0), 0.7);
        assert!(l1_clip_step(-0.0, 0.1).is_sign_positive());
    }

    proptest! {
        #[test]
        fn never_flips_sign_and_never_grows(x in -1e3f64..1e3, p in 0.0f64..1e3) {
            let y = l1_clip_step(x, p);
            prop_assert!(y == 0.0 || y.signum() == x.signum());
            prop_assert!(y.abs() <= x.abs());
            if x.abs() <= p {
                prop_assert_eq!(y, 0.0);
            } else {
                prop_assert_eq!(y, x - p * x.signum());
            }
        }
    }
}
