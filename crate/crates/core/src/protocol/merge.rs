use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::nn::ParamSet;
use crate::tensor::Tensor;

/// One participant's contribution to a barrier.
#[derive(Debug, Clone, PartialEq)]
pub struct Submission {
    pub client_id: usize,
    pub weights: ParamSet,
    /// Validation accuracy vote; only client-side submissions carry one.
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientMerge {
    pub weights: ParamSet,
    pub conv: bool,
    pub v_avg: f64,
    pub participants: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerMerge {
    pub weights: ParamSet,
    pub participants: Vec<usize>,
}

/// Unweighted element-wise mean.  Inputs are visited in the order given; the
/// result is `w_0 + (sum_i (w_i - w_0)) / m`, which equals the plain mean
/// up to rounding and maps identical inputs exactly onto themselves.
pub fn mean_params(sets: &[&ParamSet]) -> Result<ParamSet> {
    let (first, rest) = sets
        .split_first()
        .ok_or_else(|| Error::protocol("mean of zero parameter sets"))?;
    if let Some(bad) = rest.iter().find(|s| !s.same_shapes(first)) {
        return Err(Error::ShapeMismatch(format!(
            "cannot average parameter sets with {} and {} scalars of different layout",
            first.scalar_count(),
            bad.scalar_count()
        )));
    }
    let m = sets.len() as f64;
    let layers = first
        .layers()
        .iter()
        .enumerate()
        .map(|(l, tensors)| {
            tensors
                .iter()
                .enumerate()
                .map(|(t, base)| {
                    let mut acc = vec![0.0; base.len()];
                    for s in rest {
                        for ((a, &x), &b) in acc.iter_mut().zip(s[l][t].data()).zip(base.data()) {
                            *a += x - b;
                        }
                    }
                    let data = acc.iter().zip(base.data()).map(|(a, &b)| b + a / m).collect();
                    Tensor::new(base.shape().to_vec(), data)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ParamSet::new(layers))
}

fn sorted(subs: &[Submission]) -> Result<Vec<&Submission>> {
    let mut v: Vec<&Submission> = subs.iter().collect();
    v.sort_by_key(|s| s.client_id);
    if let Some(w) = v.windows(2).find(|w| w[0].client_id == w[1].client_id) {
        return Err(Error::protocol(format!("client {} submitted twice", w[0].client_id)));
    }
    Ok(v)
}

/// Averages back-part weights (summed in ascending client id) and votes on
/// convergence: `conv` holds when the mean validation accuracy of the
/// participants reaches `v_thres`.  Returns `None` for an empty barrier.
pub fn merge_weights_clients(subs: &[Submission], v_thres: f64) -> Result<Option<ClientMerge>> {
    if subs.is_empty() {
        return Ok(None);
    }
    let subs = sorted(subs)?;
    let mut v_sum = 0.0;
    for s in &subs {
        v_sum += s.val_acc.ok_or_else(|| {
            Error::protocol(format!("client {} submitted no validation accuracy", s.client_id))
        })?;
    }
    let v_avg = v_sum / subs.len() as f64;
    let weights = mean_params(&subs.iter().map(|s| &s.weights).collect::<Vec<_>>())?;
    Ok(Some(ClientMerge {
        weights,
        conv: v_avg >= v_thres,
        v_avg,
        participants: subs.iter().map(|s| s.client_id).collect(),
    }))
}

/// Averages central replicas over the connected clients.
pub fn merge_weights_server(subs: &[Submission]) -> Result<Option<ServerMerge>> {
    if subs.is_empty() {
        return Ok(None);
    }
    let subs = sorted(subs)?;
    let weights = mean_params(&subs.iter().map(|s| &s.weights).collect::<Vec<_>>())?;
    Ok(Some(ServerMerge {
        weights,
        participants: subs.iter().map(|s| s.client_id).collect(),
    }))
}

/// Collects submissions until a logical deadline.  Anything arriving after
/// the deadline is turned away and the participant keeps its local weights.
#[derive(Debug, Clone)]
pub struct MergeBarrier {
    expected: BTreeSet<usize>,
    deadline: u64,
    submissions: Vec<Submission>,
    late: Vec<usize>,
}

impl MergeBarrier {
    pub fn new(expected: impl IntoIterator<Item = usize>, deadline: u64) -> Self {
        MergeBarrier {
            expected: expected.into_iter().collect(),
            deadline,
            submissions: Vec::new(),
            late: Vec::new(),
        }
    }

    pub fn deadline(&self) -> u64 {
        self.deadline
    }

    /// Returns whether the submission made it before the deadline.
    pub fn submit(&mut self, sub: Submission, at_tick: u64) -> Result<bool> {
        let id = sub.client_id;
        if !self.expected.contains(&id) {
            return Err(Error::protocol(format!("unexpected submission from client {id}")));
        }
        if self.submissions.iter().any(|s| s.client_id == id) || self.late.contains(&id) {
            return Err(Error::protocol(format!("client {id} submitted twice")));
        }
        if at_tick > self.deadline {
            self.late.push(id);
            return Ok(false);
        }
        self.submissions.push(sub);
        Ok(true)
    }

    /// Submissions present at the deadline, and the ids that missed it
    /// (including those that never showed up).
    pub fn close(self) -> (Vec<Submission>, Vec<usize>) {
        let arrived: BTreeSet<usize> = self.submissions.iter().map(|s| s.client_id).collect();
        let missed = self.expected.difference(&arrived).copied().collect();
        (self.submissions, missed)
    }
}
