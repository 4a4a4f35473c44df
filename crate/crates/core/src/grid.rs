//! Mixed-radix enumeration of index tuples.

/// Iterates every tuple `t` with `t[i] < radices[i]`, last index fastest.
#[derive(Debug, Clone)]
pub struct Odometer {
    radices: Vec<usize>,
    current: Vec<usize>,
    started: bool,
    done: bool,
}

impl Odometer {
    pub fn new(radices: &[usize]) -> Self {
        Self {
            radices: radices.to_vec(),
            current: vec![0; radices.len()],
            started: false,
            done: radices.contains(&0),
        }
    }

    /// Advances and returns the next tuple; the empty radix list yields one
    /// empty tuple.
    pub fn advance(&mut self) -> Option<&[usize]> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.current);
        }
        for i in (0..self.radices.len()).rev() {
            self.current[i] += 1;
            if self.current[i] < self.radices[i] {
                return Some(&self.current);
            }
            self.current[i] = 0;
        }
        self.done = true;
        None
    }
}

/// Product of `radices` as `u128`, saturating.
pub fn count(radices: &[usize]) -> u128 {
    radices
        .iter()
        .fold(1u128, |acc, &r| acc.saturating_mul(r as u128))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerates_in_order() {
        let mut o = Odometer::new(&[2, 3]);
        let mut seen = Vec::new();
        while let Some(t) = o.advance() {
            seen.push(t.to_vec());
        }
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[0], vec![0, 0]);
        assert_eq!(seen[1], vec![0, 1]);
        assert_eq!(seen[5], vec![1, 2]);
        assert_eq!(count(&[2, 3]), 6);
    }

    #[test]
    fn edge_cases() {
        let mut empty = Odometer::new(&[]);
        assert_eq!(empty.advance(), Some(&[][..]));
        assert_eq!(empty.advance(), None);
        assert_eq!(Odometer::new(&[3, 0]).advance(), None);
    }
}
