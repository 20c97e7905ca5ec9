//! RIPPER rule induction over integer features.
//!
//! The positive class is the minority label of the training data. Rules are
//! grown greedily on FOIL information gain, pruned on held-back data, and
//! the rule list is kept under a minimum-description-length budget.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::{Label, LabeledDataset};
use super::rules::{DecisionRule, RuleSet};
use super::LearnError;
use crate::condition::{Atom, Comparator, Condition};
use crate::rng::{stream, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerParams {
    pub seed: u64,
    /// Share of each class used for growing; the rest is for pruning.
    pub grow_fraction: f64,
    pub optimization_passes: usize,
    /// Minimum positive coverage of a candidate condition.
    pub min_coverage: u64,
    /// Stop adding rules once the description length exceeds the best seen
    /// by this many bits.
    pub dl_slack_bits: f64,
}

impl Default for LearnerParams {
    fn default() -> Self {
        Self {
            seed: 1,
            grow_fraction: 2.0 / 3.0,
            optimization_passes: 2,
            min_coverage: 2,
            dl_slack_bits: 64.0,
        }
    }
}

type BAtom = (usize, Comparator, u64);

#[derive(Debug, Clone)]
struct Rule {
    atoms: Vec<BAtom>,
    cover: Vec<bool>,
}

fn log2(x: f64) -> f64 {
    x.log2()
}

/// Bits to pick `k` out of `t` elements where each is chosen with
/// probability `p`.
fn subset_dl(t: f64, k: f64, p: f64) -> f64 {
    let term = |count: f64, prob: f64| {
        if count <= 0.0 {
            0.0
        } else if prob <= 0.0 {
            f64::INFINITY
        } else {
            -count * log2(prob)
        }
    };
    term(k, p) + term(t - k, 1.0 - p)
}

fn theory_dl(k: usize, all_conditions: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let k = k as f64;
    0.5 * (log2(k) + subset_dl(all_conditions, k, k / all_conditions))
}

fn data_dl(exp_fp_over_err: f64, cover: f64, uncover: f64, fp: f64, fn_: f64) -> f64 {
    let total_bits = log2(cover + uncover + 1.0);
    let (cover_bits, uncover_bits) = if cover > uncover {
        let exp_err = exp_fp_over_err * (fp + fn_);
        let c = subset_dl(cover, fp, exp_err / cover);
        let u = if uncover > 0.0 {
            subset_dl(uncover, fn_, fn_ / uncover)
        } else {
            0.0
        };
        (c, u)
    } else {
        let exp_err = (1.0 - exp_fp_over_err) * (fp + fn_);
        let c = if cover > 0.0 {
            subset_dl(cover, fp, fp / cover)
        } else {
            0.0
        };
        let u = subset_dl(uncover, fn_, exp_err / uncover);
        (c, u)
    };
    total_bits + cover_bits + uncover_bits
}

fn foil_gain(p: f64, n: f64, big_p: f64, big_n: f64) -> f64 {
    p * (log2(p / (p + n)) - log2(big_p / (big_p + big_n)))
}

struct Ctx<'a> {
    rows: &'a [Vec<u64>],
    pos: Vec<bool>,
    /// Row indices sorted by each field's value.
    order: Vec<Vec<u32>>,
    all_conditions: f64,
    exp_fp_over_err: f64,
    params: &'a LearnerParams,
    rng: StreamRng,
}

impl<'a> Ctx<'a> {
    fn new(data: &'a LabeledDataset, positive: Label, params: &'a LearnerParams) -> Self {
        let rows = data.rows();
        let pos: Vec<bool> = data.labels().iter().map(|&l| l == positive).collect();
        let nf = data.fields().len();
        let mut order = Vec::with_capacity(nf);
        let mut all_conditions = 0.0;
        for f in 0..nf {
            let mut idx: Vec<u32> = (0..rows.len() as u32).collect();
            idx.sort_by_key(|&i| rows[i as usize][f]);
            let distinct = idx
                .windows(2)
                .filter(|w| rows[w[0] as usize][f] != rows[w[1] as usize][f])
                .count()
                + usize::from(!idx.is_empty());
            all_conditions += 2.0 * distinct as f64;
            order.push(idx);
        }
        let n_pos = pos.iter().filter(|&&p| p).count() as f64;
        Self {
            rows,
            exp_fp_over_err: n_pos / rows.len() as f64,
            pos,
            order,
            all_conditions: all_conditions.max(1.0),
            params,
            rng: stream(params.seed, &[0x7269_7070]),
        }
    }

    fn n(&self) -> usize {
        self.rows.len()
    }

    fn matches(&self, atoms: &[BAtom], i: usize) -> bool {
        let row = &self.rows[i];
        atoms.iter().all(|&(f, op, c)| op.holds(row[f], c))
    }

    fn rule(&self, atoms: Vec<BAtom>) -> Rule {
        let cover = (0..self.n()).map(|i| self.matches(&atoms, i)).collect();
        Rule { atoms, cover }
    }

    /// Stratified, seeded split into grow and prune parts.
    fn split(&mut self, indices: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let (mut p, mut n): (Vec<usize>, Vec<usize>) = indices.iter().partition(|&&i| self.pos[i]);
        p.shuffle(&mut self.rng);
        n.shuffle(&mut self.rng);
        let mut grow = Vec::new();
        let mut prune = Vec::new();
        for class in [p, n] {
            let g = (class.len() as f64 * self.params.grow_fraction).ceil() as usize;
            let g = g.min(class.len());
            grow.extend_from_slice(&class[..g]);
            prune.extend_from_slice(&class[g..]);
        }
        grow.sort_unstable();
        prune.sort_unstable();
        (grow, prune)
    }

    fn counts(&self, indices: &[usize], fires: impl Fn(usize) -> bool) -> (u64, u64) {
        let (mut p, mut n) = (0, 0);
        for &i in indices {
            if fires(i) {
                if self.pos[i] {
                    p += 1;
                } else {
                    n += 1;
                }
            }
        }
        (p, n)
    }

    /// Adds conditions greedily until no covered grow negatives remain or no
    /// condition has positive gain.
    fn grow(&self, mut atoms: Vec<BAtom>, grow: &[usize]) -> Vec<BAtom> {
        let mut mask = vec![false; self.n()];
        for &i in grow {
            mask[i] = self.matches(&atoms, i);
        }
        loop {
            let (mut big_p, mut big_n) = (0u64, 0u64);
            for &i in grow {
                if mask[i] {
                    if self.pos[i] {
                        big_p += 1;
                    } else {
                        big_n += 1;
                    }
                }
            }
            if big_p == 0 || big_n == 0 {
                break;
            }
            let Some(best) = self.best_atom(&mask, big_p, big_n) else {
                break;
            };
            for &i in grow {
                if mask[i] && !best.1.holds(self.rows[i][best.0], best.2) {
                    mask[i] = false;
                }
            }
            atoms.push(best);
        }
        atoms
    }

    fn best_atom(&self, mask: &[bool], big_p: u64, big_n: u64) -> Option<BAtom> {
        let (bp, bn) = (big_p as f64, big_n as f64);
        let min_cov = self.params.min_coverage.max(1);
        let mut best: Option<(f64, BAtom)> = None;
        let mut consider = |gain: f64, atom: BAtom| {
            if gain > 0.0 && best.as_ref().is_none_or(|(g, _)| gain > *g) {
                best = Some((gain, atom));
            }
        };
        for (f, order) in self.order.iter().enumerate() {
            let (mut p_le, mut n_le) = (0u64, 0u64);
            let mut prev: Option<u64> = None;
            for &i in order {
                let i = i as usize;
                if !mask[i] {
                    continue;
                }
                let v = self.rows[i][f];
                if let Some(a) = prev {
                    if v != a {
                        let m = a + (v - a) / 2;
                        if p_le >= min_cov {
                            consider(foil_gain(p_le as f64, n_le as f64, bp, bn), (f, Comparator::Le, m));
                        }
                        let (p_ge, n_ge) = (big_p - p_le, big_n - n_le);
                        if p_ge >= min_cov {
                            consider(foil_gain(p_ge as f64, n_ge as f64, bp, bn), (f, Comparator::Ge, m + 1));
                        }
                    }
                }
                prev = Some(v);
                if self.pos[i] {
                    p_le += 1;
                } else {
                    n_le += 1;
                }
            }
        }
        best.map(|(_, a)| a)
    }

    /// Keeps the prefix with the best `(p - n) / (p + n)` on the prune set.
    fn prune_worth(&self, atoms: Vec<BAtom>, prune: &[usize]) -> Vec<BAtom> {
        let mut best_len = atoms.len();
        let mut best_worth = f64::NEG_INFINITY;
        for len in 1..=atoms.len() {
            let (p, n) = self.counts(prune, |i| self.matches(&atoms[..len], i));
            let worth = if p + n == 0 {
                0.0
            } else {
                (p as f64 - n as f64) / (p + n) as f64
            };
            if worth > best_worth {
                best_worth = worth;
                best_len = len;
            }
        }
        let mut atoms = atoms;
        atoms.truncate(best_len);
        atoms
    }

    /// Keeps the prefix minimising the error of the whole rule list on the
    /// prune set, given which prune rows the other rules already cover.
    fn prune_error(&self, atoms: Vec<BAtom>, prune: &[usize], others: &[bool]) -> Vec<BAtom> {
        let mut best_len = atoms.len();
        let mut best_err = u64::MAX;
        for len in 1..=atoms.len() {
            let err = prune
                .iter()
                .filter(|&&i| (others[i] || self.matches(&atoms[..len], i)) != self.pos[i])
                .count() as u64;
            if err < best_err {
                best_err = err;
                best_len = len;
            }
        }
        let mut atoms = atoms;
        atoms.truncate(best_len);
        atoms
    }

    fn dl(&self, rules: &[&Rule]) -> f64 {
        let (mut cover, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for i in 0..self.n() {
            let c = rules.iter().any(|r| r.cover[i]);
            if c {
                cover += 1;
                fp += u64::from(!self.pos[i]);
            } else {
                fn_ += u64::from(self.pos[i]);
            }
        }
        let theory: f64 = rules
            .iter()
            .map(|r| theory_dl(r.atoms.len(), self.all_conditions))
            .sum();
        let uncover = self.n() as u64 - cover;
        theory + data_dl(self.exp_fp_over_err, cover as f64, uncover as f64, fp as f64, fn_ as f64)
    }

    fn dl_all(&self, rules: &[Rule]) -> f64 {
        self.dl(&rules.iter().collect::<Vec<_>>())
    }

    fn uncovered(&self, rules: &[Rule]) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| !rules.iter().any(|r| r.cover[i]))
            .collect()
    }

    /// Appends rules for the positives no current rule covers.
    fn cover_positives(&mut self, rules: &mut Vec<Rule>) {
        let mut remaining = self.uncovered(rules);
        let mut min_dl = self.dl_all(rules);
        while remaining.iter().any(|&i| self.pos[i]) {
            let (grow, prune) = self.split(&remaining);
            let atoms = self.grow(Vec::new(), &grow);
            if atoms.is_empty() {
                break;
            }
            let atoms = self.prune_worth(atoms, &prune);
            let rule = self.rule(atoms);
            let (p, n) = self.counts(&remaining, |i| rule.cover[i]);
            if p == 0 || n as f64 / (p + n) as f64 >= 0.5 {
                break;
            }
            rules.push(rule);
            let dl = self.dl_all(rules);
            if dl > min_dl + self.params.dl_slack_bits {
                rules.pop();
                break;
            }
            min_dl = min_dl.min(dl);
            let last = rules.last().expect("just pushed");
            remaining.retain(|&i| !last.cover[i]);
        }
    }

    /// Drops rules, last first, whenever that lowers the description length.
    fn reduce_dl(&self, rules: &mut Vec<Rule>) {
        let mut i = rules.len();
        while i > 0 {
            i -= 1;
            let with = self.dl_all(rules);
            let without: Vec<&Rule> = rules
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, r)| r)
                .collect();
            if self.dl(&without) < with {
                rules.remove(i);
            }
        }
    }

    fn optimize(&mut self, rules: &mut Vec<Rule>) {
        for i in 0..rules.len() {
            let remaining = self.uncovered(&rules[..i]);
            let (grow, prune) = self.split(&remaining);
            let others: Vec<bool> = (0..self.n())
                .map(|j| rules.iter().enumerate().any(|(k, r)| k != i && r.cover[j]))
                .collect();
            let mut candidates = Vec::with_capacity(2);
            let replacement = self.grow(Vec::new(), &grow);
            if !replacement.is_empty() {
                candidates.push(self.prune_error(replacement, &prune, &others));
            }
            let revision = self.grow(rules[i].atoms.clone(), &grow);
            candidates.push(self.prune_error(revision, &prune, &others));

            let mut best_dl = self.dl_all(rules);
            let mut best: Option<Rule> = None;
            for atoms in candidates {
                if atoms == rules[i].atoms {
                    continue;
                }
                let variant = self.rule(atoms);
                let set: Vec<&Rule> = rules
                    .iter()
                    .enumerate()
                    .map(|(k, r)| if k == i { &variant } else { r })
                    .collect();
                let dl = self.dl(&set);
                if dl < best_dl {
                    best_dl = dl;
                    best = Some(variant);
                }
            }
            if let Some(rule) = best {
                rules[i] = rule;
            }
        }
        self.cover_positives(rules);
        self.reduce_dl(rules);
    }
}

/// Collapses repeated bounds on one field to the tightest, keeping the
/// order of first mention.
fn simplify(atoms: &[BAtom]) -> Vec<BAtom> {
    let mut out: Vec<BAtom> = Vec::new();
    for &(f, op, c) in atoms {
        match out.iter_mut().find(|(g, o, _)| *g == f && *o == op) {
            Some(slot) => match op {
                Comparator::Le | Comparator::Lt => slot.2 = slot.2.min(c),
                Comparator::Ge | Comparator::Gt => slot.2 = slot.2.max(c),
                _ => out.push((f, op, c)),
            },
            None => out.push((f, op, c)),
        }
    }
    out
}

/// Induces a rule set whose minority rules predict the minority label of
/// `data`, annotated with coverage statistics over all of `data`.
pub fn learn(data: &LabeledDataset, params: &LearnerParams) -> Result<RuleSet, LearnError> {
    let minority = data.minority_label();
    let mut ruleset = RuleSet::default_only(minority.other());
    let degenerate = data.len() < 2 || data.count(Label::Presence) == 0 || data.count(Label::Absence) == 0;
    if !degenerate {
        let mut ctx = Ctx::new(data, minority, params);
        let mut rules = Vec::new();
        ctx.cover_positives(&mut rules);
        ctx.reduce_dl(&mut rules);
        for _ in 0..params.optimization_passes {
            ctx.optimize(&mut rules);
        }
        let fields = data.fields();
        ruleset.minority_rules = rules
            .iter()
            .map(|r| {
                let atoms = simplify(&r.atoms)
                    .into_iter()
                    .map(|(f, op, c)| Atom::new(fields[f].clone(), op, c))
                    .collect();
                DecisionRule::new(Condition::new(atoms), minority)
            })
            .collect();
    }
    ruleset.annotate(data)?;
    Ok(ruleset)
}
