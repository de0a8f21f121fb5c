use super::RingError;

/// Number of rotation classes of length-`n` binary strings without two
/// cyclically adjacent ones, i.e. the valid output patterns of an `n`-ring
/// up to rotation.
///
/// `(1/n) sum_{d | n} phi(n/d) L_d` with Lucas numbers `L_d`, exact up to
/// `n = 90`.
pub fn necklace_count(n: usize) -> Result<u128, RingError> {
    if n == 0 || n > 90 {
        return Err(RingError::NecklaceRange(n));
    }
    let total: u128 = (1..=n)
        .filter(|&d| n.is_multiple_of(d))
        .map(|d| totient(n / d) as u128 * lucas(d))
        .sum();
    Ok(total / n as u128)
}

fn lucas(d: usize) -> u128 {
    let (mut a, mut b) = (2u128, 1u128);
    for _ in 0..d {
        (a, b) = (b, a + b);
    }
    a
}

fn totient(mut m: usize) -> usize {
    let mut result = m;
    let mut p = 2;
    while p * p <= m {
        if m.is_multiple_of(p) {
            while m.is_multiple_of(p) {
                m /= p;
            }
            result -= result / p;
        }
        p += 1;
    }
    if m > 1 {
        result -= result / m;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_values() {
        assert_eq!(necklace_count(1).unwrap(), 1);
        assert_eq!(necklace_count(4).unwrap(), 3);
        assert_eq!(necklace_count(6).unwrap(), 5);
        assert!(necklace_count(0).is_err());
        assert!(necklace_count(91).is_err());
        assert!(necklace_count(90).unwrap() > 0);
    }

    #[test]
    fn helpers() {
        assert_eq!(
            (0..8).map(lucas).collect::<Vec<_>>(),
            vec![2, 1, 3, 4, 7, 11, 18, 29]
        );
        assert_eq!(
            (1..=10).map(totient).collect::<Vec<_>>(),
            vec![1, 1, 2, 2, 4, 2, 6, 4, 6, 4]
        );
    }
}
