//! Classical NAND-tree semantics.
//!
//! Trees are balanced and binary, stored heap-style: node 1 is the root,
//! node `i` has children `2i` and `2i + 1`, and for a tree with `N = 2^n`
//! leaves the nodes `N..2N` are the leaves, left to right. Every subtree
//! therefore covers a contiguous range of input bits.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NandError, Result};

/// Default depth cap for classical operations.
pub const MAX_CLASSICAL_DEPTH: u32 = 20;

/// Depth cap for the worst-case recursion. It is O(depth), but the values
/// grow like 1.686^depth and leave the f64 range past ~1300.
pub const MAX_RECURSION_DEPTH: u32 = 1024;

/// A NAND-tree problem: depth `n` and the `2^n` leaf bits.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NandInstance {
    depth: u32,
    bits: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    depth: u32,
    bits: String,
}

impl NandInstance {
    pub fn new(depth: u32, bits: Vec<bool>) -> Result<Self> {
        Self::with_cap(depth, bits, MAX_CLASSICAL_DEPTH)
    }

    pub fn with_cap(depth: u32, bits: Vec<bool>, cap: u32) -> Result<Self> {
        if depth > cap {
            return Err(NandError::DepthOverCap { depth, cap });
        }
        let expected = 1usize << depth;
        if bits.len() != expected {
            return Err(NandError::InvalidInstance(format!(
                "depth {depth} needs {expected} bits, got {}",
                bits.len()
            )));
        }
        Ok(Self { depth, bits })
    }

    /// Parses a string of `0`/`1` characters.
    pub fn from_bit_str(depth: u32, bits: &str) -> Result<Self> {
        let parsed = bits
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(NandError::InvalidInstance(format!(
                    "unexpected character {other:?} in bit string"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(depth, parsed)
    }

    /// Instance whose bits are the low `2^depth` bits of `pattern`, bit 0 first.
    pub fn from_index(depth: u32, pattern: u64) -> Result<Self> {
        let n = 1usize << depth;
        Self::new(depth, (0..n).map(|k| (pattern >> k) & 1 == 1).collect())
    }

    pub fn random(depth: u32, rng: &mut impl Rng) -> Result<Self> {
        let n = 1usize << depth;
        Self::new(depth, (0..n).map(|_| rng.gen()).collect())
    }

    /// Every instance of the given depth. Only sensible for depth ≤ 4.
    pub fn enumerate(depth: u32) -> Result<Vec<Self>> {
        if depth > 4 {
            return Err(NandError::DepthOverCap { depth, cap: 4 });
        }
        let count = 1u64 << (1u64 << depth);
        (0..count).map(|p| Self::from_index(depth, p)).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        Self::from_bit_str(file.depth, &file.bits)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&InstanceFile {
            depth: self.depth,
            bits: self.bit_string(),
        })
        .expect("instance serialization is infallible")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn num_leaves(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bit(&self, k: usize) -> bool {
        self.bits[k]
    }

    pub fn bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

impl fmt::Display for NandInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n={} x={}", self.depth, self.bit_string())
    }
}

/// Number of leaf reads (classical) or oracle calls (quantum).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct QueryCount(pub u64);

impl QueryCount {
    fn bump(&mut self) {
        self.0 += 1;
    }
}

/// Evaluates the tree bottom-up, reading every leaf.
pub fn eval_exact(instance: &NandInstance) -> bool {
    node_values(instance)[1]
}

/// Values of every heap node (index 0 unused).
pub fn node_values(instance: &NandInstance) -> Vec<bool> {
    let n = instance.num_leaves();
    let mut values = vec![false; 2 * n];
    values[n..].copy_from_slice(instance.bits());
    for i in (1..n).rev() {
        values[i] = !(values[2 * i] && values[2 * i + 1]);
    }
    values
}

/// Randomized short-circuit evaluation.
///
/// At every internal node a fair coin picks which child to evaluate first;
/// a first child of value 0 decides the node (NAND = 1) and the sibling is
/// skipped. Returns the root value and the number of leaves read.
pub fn eval_randomized_pruning(instance: &NandInstance, seed: u64) -> (bool, QueryCount) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reads = QueryCount::default();
    let value = prune(instance, 1, &mut rng, &mut reads);
    (value, reads)
}

fn prune(instance: &NandInstance, node: usize, rng: &mut ChaCha8Rng, reads: &mut QueryCount) -> bool {
    let n = instance.num_leaves();
    if node >= n {
        reads.bump();
        return instance.bit(node - n);
    }
    let (first, second) = if rng.gen::<bool>() {
        (2 * node, 2 * node + 1)
    } else {
        (2 * node + 1, 2 * node)
    };
    if !prune(instance, first, rng, reads) {
        return true;
    }
    !prune(instance, second, rng, reads)
}

/// Exact expected leaf reads of [`eval_randomized_pruning`] on one instance,
/// averaging over the coin flips analytically.
pub fn expected_pruning_queries(instance: &NandInstance) -> f64 {
    let values = node_values(instance);
    let n = instance.num_leaves();
    let mut cost = vec![0.0; 2 * n];
    for c in cost[n..].iter_mut() {
        *c = 1.0;
    }
    for i in (1..n).rev() {
        let (l, r) = (2 * i, 2 * i + 1);
        let left_first = cost[l] + if values[l] { cost[r] } else { 0.0 };
        let right_first = cost[r] + if values[r] { cost[l] } else { 0.0 };
        cost[i] = 0.5 * (left_first + right_first);
    }
    cost[1]
}

/// Adversarial worst-case expected leaf reads for roots of value 0 and 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WorstCase {
    pub depth: u32,
    pub w0: f64,
    pub w1: f64,
}

impl WorstCase {
    pub fn max(&self) -> f64 {
        self.w0.max(self.w1)
    }
}

/// Child-value pairs consistent with a root value.
fn consistent_children(value: bool) -> &'static [(bool, bool)] {
    if value {
        &[(false, false), (false, true), (true, false)]
    } else {
        &[(true, true)]
    }
}

/// Expected cost at a node given the children's values and worst-case costs,
/// averaged over the two evaluation orders.
fn order_averaged(children: (bool, bool), cost: (f64, f64)) -> f64 {
    let left_first = cost.0 + if children.0 { cost.1 } else { 0.0 };
    let right_first = cost.1 + if children.1 { cost.0 } else { 0.0 };
    0.5 * (left_first + right_first)
}

/// Worst-case expected queries of the randomized pruning evaluator at `depth`.
pub fn worst_case_expected_queries(depth: u32) -> Result<WorstCase> {
    Ok(*worst_case_table(depth)?.last().expect("table is never empty"))
}

/// The recursion for every depth `0..=max_depth`.
pub fn worst_case_table(max_depth: u32) -> Result<Vec<WorstCase>> {
    if max_depth > MAX_RECURSION_DEPTH {
        return Err(NandError::DepthOverCap {
            depth: max_depth,
            cap: MAX_RECURSION_DEPTH,
        });
    }
    let mut table = Vec::with_capacity(max_depth as usize + 1);
    table.push(WorstCase {
        depth: 0,
        w0: 1.0,
        w1: 1.0,
    });
    for d in 1..=max_depth {
        let prev = table[d as usize - 1];
        let w = |v: bool| if v { prev.w1 } else { prev.w0 };
        let best = |value: bool| {
            consistent_children(value)
                .iter()
                .map(|&(a, b)| order_averaged((a, b), (w(a), w(b))))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        table.push(WorstCase {
            depth: d,
            w0: best(false),
            w1: best(true),
        });
    }
    Ok(table)
}

/// Builds an input that attains the worst-case expectation for `root_value`.
///
/// At each node the child values are taken from the maximizing pairs of the
/// recursion; ties and mirror images are broken with `rng`, so different
/// generators give different (equally hard) inputs.
pub fn adversarial_instance(depth: u32, root_value: bool, rng: &mut impl Rng) -> Result<NandInstance> {
    let table = worst_case_table(depth)?;
    let n = 1usize << depth;
    let mut values = vec![false; 2 * n];
    values[1] = root_value;
    for i in 1..n {
        let level_below = depth - (usize::BITS - 1 - i.leading_zeros()) - 1;
        let below = table[level_below as usize];
        let w = |v: bool| if v { below.w1 } else { below.w0 };
        let pairs = consistent_children(values[i]);
        let costs: Vec<f64> = pairs
            .iter()
            .map(|&(a, b)| order_averaged((a, b), (w(a), w(b))))
            .collect();
        let top = costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let winners: Vec<_> = pairs
            .iter()
            .zip(&costs)
            .filter(|(_, &c)| (top - c).abs() <= 1e-12 * top)
            .map(|(p, _)| *p)
            .collect();
        let (a, b) = winners[rng.gen_range(0..winners.len())];
        values[2 * i] = a;
        values[2 * i + 1] = b;
    }
    NandInstance::new(depth, values[n..].to_vec())
}
