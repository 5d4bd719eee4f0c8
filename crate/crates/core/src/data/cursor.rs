use rand::seq::SliceRandom;

use crate::rng::Rng;

/// Walks a client's sample order batch by batch.  Samples not reached in one
/// global epoch are served first in the next; once the order is exhausted it
/// is reshuffled with the cursor's own generator and reading continues.
#[derive(Debug, Clone)]
pub struct BatchCursor {
    order: Vec<usize>,
    pos: usize,
    passes: usize,
    rng: Rng,
}

impl BatchCursor {
    pub fn new(order: Vec<usize>, rng: Rng) -> Self {
        BatchCursor {
            order,
            pos: 0,
            passes: 0,
            rng,
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    /// Completed passes over the data.
    pub fn passes(&self) -> usize {
        self.passes
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        assert!(!self.order.is_empty(), "batch from an empty cursor");
        let mut batch = Vec::with_capacity(size);
        while batch.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
                self.passes += 1;
            }
            let take = (size - batch.len()).min(self.order.len() - self.pos);
            batch.extend_from_slice(&self.order[self.pos..self.pos + take]);
            self.pos += take;
        }
        if self.pos == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
            self.passes += 1;
        }
        batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn large_client_trace_continues_across_epochs() {
        let mut c = BatchCursor::new((0..2000).collect(), rng::stream(1, "t", 0));
        let e1: Vec<usize> = (0..2).flat_map(|_| c.next_batch(64)).collect();
        let e2: Vec<usize> = (0..2).flat_map(|_| c.next_batch(64)).collect();
        assert_eq!(e1, (0..128).collect::<Vec<_>>());
        assert_eq!(e2, (128..256).collect::<Vec<_>>());
    }

    #[test]
    fn divisible_size_returns_to_zero() {
        let mut c = BatchCursor::new((0..128).collect(), rng::stream(1, "t", 0));
        c.next_batch(64);
        c.next_batch(64);
        assert_eq!(c.position(), 0);
        assert_eq!(c.passes(), 1);
    }

    #[test]
    fn leftover_is_served_first() {
        let mut c = BatchCursor::new((0..150).collect(), rng::stream(1, "t", 0));
        c.next_batch(64);
        c.next_batch(64);
        let b = c.next_batch(64);
        assert_eq!(&b[..22], &(128..150).collect::<Vec<_>>()[..]);
        assert_eq!(b.len(), 64);
    }
}
