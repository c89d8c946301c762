//! Multiclass gradient-boosted trees with a softmax link. Second-order leaf
//! weights, exact greedy splits over presorted features, level-wise growth.

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use super::eval::balanced_accuracy;
use crate::error::{Error, Result};
use crate::rng;

pub const FORMAT_HEADER: &str = "fleetgrid-gbt v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbtParams {
    pub learning_rate: f64,
    pub n_rounds: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub lambda: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            learning_rate: 0.1,
            n_rounds: 200,
            max_depth: 4,
            min_samples_leaf: 10,
            lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    /// -1 marks a leaf.
    pub feature: i32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    pub leaf: f64,
}

impl Node {
    fn leaf(value: f64) -> Self {
        Node {
            feature: -1,
            threshold: 0.0,
            left: 0,
            right: 0,
            leaf: value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let n = &self.nodes[i];
            if n.feature < 0 {
                return n.leaf;
            }
            i = if row[n.feature as usize] <= n.threshold {
                n.left as usize
            } else {
                n.right as usize
            };
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbtModel {
    /// Class labels, in margin order.
    pub classes: Vec<u32>,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub n_features: usize,
    pub base: Vec<f64>,
    /// Raw split-gain sums per feature.
    pub importance: Vec<f64>,
    /// `trees[k]` holds the boosting rounds for class `k`.
    pub trees: Vec<Vec<Tree>>,
}

pub fn softmax(margins: &[f64]) -> Vec<f64> {
    let m = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = margins.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Negative log-likelihood of class `label` under softmax margins.
pub fn multinomial_log_loss(margins: &[f64], label: usize) -> f64 {
    let m = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + margins.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
    lse - margins[label]
}

/// Negative gradient of the log-loss: one-hot minus softmax.
pub fn pseudo_residuals(margins: &[f64], label: usize) -> Vec<f64> {
    softmax(margins)
        .into_iter()
        .enumerate()
        .map(|(k, p)| if k == label { 1.0 - p } else { -p })
        .collect()
}

impl GbtModel {
    pub fn n_rounds(&self) -> usize {
        self.trees.first().map_or(0, Vec::len)
    }

    pub fn margins(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.n_features {
            return Err(Error::Model(format!(
                "feature dimension {} does not match model dimension {}",
                row.len(),
                self.n_features
            )));
        }
        Ok(self
            .trees
            .iter()
            .zip(&self.base)
            .map(|(trees, &b)| b + trees.iter().map(|t| t.predict(row)).sum::<f64>())
            .collect())
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.margins(row)?))
    }

    /// Highest-probability class label; ties go to the earlier class.
    pub fn predict_class(&self, row: &[f64]) -> Result<u32> {
        let p = self.predict_proba(row)?;
        Ok(self.classes[argmax(&p)])
    }

    /// Split-gain importances normalized to sum to 1 (all zero if no split was made).
    pub fn feature_importance(&self) -> Vec<f64> {
        let total: f64 = self.importance.iter().sum();
        if total > 0.0 {
            self.importance.iter().map(|g| g / total).collect()
        } else {
            vec![0.0; self.importance.len()]
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(s, "{FORMAT_HEADER}").unwrap();
        let classes: Vec<String> = self.classes.iter().map(|c| c.to_string()).collect();
        writeln!(s, "classes {}", classes.join(" ")).unwrap();
        writeln!(s, "learning_rate {}", self.learning_rate).unwrap();
        writeln!(s, "max_depth {}", self.max_depth).unwrap();
        writeln!(s, "n_features {}", self.n_features).unwrap();
        writeln!(s, "base {}", join(&self.base)).unwrap();
        writeln!(s, "importance {}", join(&self.importance)).unwrap();
        for (k, trees) in self.trees.iter().enumerate() {
            for t in trees {
                writeln!(s, "tree {k} {}", t.nodes.len()).unwrap();
                for n in &t.nodes {
                    writeln!(s, "{} {} {} {} {}", n.feature, n.threshold, n.left, n.right, n.leaf).unwrap();
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Model(format!("model line {}: {msg}", line + 1));
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == FORMAT_HEADER => {}
            _ => return Err(bad(0, "missing header")),
        }
        let mut field = |name: &str| -> Result<(usize, Vec<String>)> {
            let (i, line) = lines.next().ok_or_else(|| bad(usize::MAX - 1, "truncated"))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(name) {
                return Err(bad(i, &format!("expected `{name}`")));
            }
            Ok((i, parts.map(str::to_string).collect()))
        };
        fn nums<T: std::str::FromStr>(i: usize, v: &[String]) -> Result<Vec<T>> {
            v.iter()
                .map(|s| s.parse().map_err(|_| Error::Model(format!("model line {}: bad number `{s}`", i + 1))))
                .collect()
        }
        let (i, v) = field("classes")?;
        let classes: Vec<u32> = nums(i, &v)?;
        let (i, v) = field("learning_rate")?;
        let learning_rate = nums::<f64>(i, &v)?.first().copied().ok_or_else(|| bad(i, "missing value"))?;
        let (i, v) = field("max_depth")?;
        let max_depth = nums::<usize>(i, &v)?.first().copied().ok_or_else(|| bad(i, "missing value"))?;
        let (i, v) = field("n_features")?;
        let n_features = nums::<usize>(i, &v)?.first().copied().ok_or_else(|| bad(i, "missing value"))?;
        let (i, v) = field("base")?;
        let base: Vec<f64> = nums(i, &v)?;
        let (i, v) = field("importance")?;
        let importance: Vec<f64> = nums(i, &v)?;
        if base.len() != classes.len() || importance.len() != n_features {
            return Err(bad(i, "inconsistent dimensions"));
        }
        let mut trees: Vec<Vec<Tree>> = vec![Vec::new(); classes.len()];
        while let Some((i, line)) = lines.next() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            if parts.len() != 3 || parts[0] != "tree" {
                return Err(bad(i, "expected `tree <class> <nodes>`"));
            }
            let k: usize = parts[1].parse().map_err(|_| bad(i, "bad class index"))?;
            let n: usize = parts[2].parse().map_err(|_| bad(i, "bad node count"))?;
            if k >= classes.len() {
                return Err(bad(i, "class index out of range"));
            }
            let mut nodes = Vec::with_capacity(n);
            for _ in 0..n {
                let (j, line) = lines.next().ok_or_else(|| bad(i, "truncated tree"))?;
                let p: Vec<&str> = line.split_whitespace().collect();
                if p.len() != 5 {
                    return Err(bad(j, "node needs 5 fields"));
                }
                let node = Node {
                    feature: p[0].parse().map_err(|_| bad(j, "bad feature"))?,
                    threshold: p[1].parse().map_err(|_| bad(j, "bad threshold"))?,
                    left: p[2].parse().map_err(|_| bad(j, "bad left"))?,
                    right: p[3].parse().map_err(|_| bad(j, "bad right"))?,
                    leaf: p[4].parse().map_err(|_| bad(j, "bad leaf"))?,
                };
                let child_ok = |c: u32| (c as usize) < n;
                if node.feature >= n_features as i32
                    || (node.feature >= 0 && !(child_ok(node.left) && child_ok(node.right)))
                {
                    return Err(bad(j, "node references an invalid feature or child"));
                }
                nodes.push(node);
            }
            trees[k].push(Tree { nodes });
        }
        Ok(GbtModel {
            classes,
            learning_rate,
            max_depth,
            n_features,
            base,
            importance,
            trees,
        })
    }
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

struct Columns {
    values: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
}

impl Columns {
    fn new<R: AsRef<[f64]>>(x: &[R], n_features: usize) -> Self {
        let values: Vec<Vec<f64>> = (0..n_features)
            .map(|f| x.iter().map(|r| r.as_ref()[f]).collect())
            .collect();
        let order = values
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Columns { values, order }
    }
}

#[derive(Clone, Copy, Default)]
struct Stats {
    g: f64,
    h: f64,
    n: usize,
}

#[derive(Clone, Copy)]
struct Scan {
    gl: f64,
    hl: f64,
    nl: usize,
    last: f64,
}

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn build_tree(
    cols: &Columns,
    g: &[f64],
    h: &[f64],
    p: &GbtParams,
    importance: &mut [f64],
    pos: &mut [u32],
) -> Tree {
    let n = g.len();
    let lambda = p.lambda;
    let score = |g: f64, h: f64| g * g / (h + lambda);
    pos.iter_mut().for_each(|v| *v = 0);
    let mut root = Stats::default();
    for i in 0..n {
        root.g += g[i];
        root.h += h[i];
    }
    root.n = n;
    let mut nodes = vec![Node::leaf(0.0)];
    let mut stats = vec![root];
    let mut frontier = vec![0usize];

    for _ in 0..p.max_depth {
        let mut slot = vec![usize::MAX; nodes.len()];
        let mut active = Vec::new();
        for &nd in &frontier {
            if stats[nd].n >= 2 * p.min_samples_leaf.max(1) {
                slot[nd] = active.len();
                active.push(nd);
            }
        }
        if active.is_empty() {
            break;
        }
        let mut best = vec![
            Best {
                gain: 0.0,
                feature: usize::MAX,
                threshold: 0.0,
            };
            active.len()
        ];
        let fresh = Scan {
            gl: 0.0,
            hl: 0.0,
            nl: 0,
            last: f64::NEG_INFINITY,
        };
        let mut scan = vec![fresh; active.len()];
        for (f, order) in cols.order.iter().enumerate() {
            let col = &cols.values[f];
            scan.iter_mut().for_each(|s| *s = fresh);
            for &i in order {
                let i = i as usize;
                let s = slot[pos[i] as usize];
                if s == usize::MAX {
                    continue;
                }
                let v = col[i];
                let a = &mut scan[s];
                let tot = stats[active[s]];
                if v > a.last && a.nl >= p.min_samples_leaf && tot.n - a.nl >= p.min_samples_leaf {
                    let gain = score(a.gl, a.hl) + score(tot.g - a.gl, tot.h - a.hl) - score(tot.g, tot.h);
                    if gain > best[s].gain {
                        best[s] = Best {
                            gain,
                            feature: f,
                            threshold: a.last,
                        };
                    }
                }
                a.gl += g[i];
                a.hl += h[i];
                a.nl += 1;
                a.last = v;
            }
        }

        let mut next = Vec::new();
        let mut children = vec![(0u32, 0u32); active.len()];
        for (s, &nd) in active.iter().enumerate() {
            let b = best[s];
            if b.feature == usize::MAX {
                continue;
            }
            importance[b.feature] += b.gain;
            let l = nodes.len() as u32;
            nodes.push(Node::leaf(0.0));
            nodes.push(Node::leaf(0.0));
            stats.push(Stats::default());
            stats.push(Stats::default());
            nodes[nd] = Node {
                feature: b.feature as i32,
                threshold: b.threshold,
                left: l,
                right: l + 1,
                leaf: 0.0,
            };
            children[s] = (l, l + 1);
            next.push(l as usize);
            next.push(l as usize + 1);
        }
        if next.is_empty() {
            break;
        }
        for i in 0..n {
            let s = slot[pos[i] as usize];
            if s == usize::MAX || best[s].feature == usize::MAX {
                continue;
            }
            let b = best[s];
            let c = if cols.values[b.feature][i] <= b.threshold {
                children[s].0
            } else {
                children[s].1
            };
            pos[i] = c;
            let st = &mut stats[c as usize];
            st.g += g[i];
            st.h += h[i];
            st.n += 1;
        }
        frontier = next;
    }

    for (node, st) in nodes.iter_mut().zip(&stats) {
        if node.feature < 0 {
            node.leaf = -st.g / (st.h + lambda) * p.learning_rate;
        }
    }
    Tree { nodes }
}

/// Fits a model with fixed hyperparameters.
pub fn fit<R: AsRef<[f64]>>(x: &[R], y: &[u32], params: &GbtParams) -> Result<GbtModel> {
    if x.len() != y.len() {
        return Err(Error::Model("feature rows and labels differ in length".into()));
    }
    if x.is_empty() {
        return Err(Error::Model("no training samples".into()));
    }
    let d = x[0].as_ref().len();
    if x.iter().any(|r| r.as_ref().len() != d) {
        return Err(Error::Model("ragged feature rows".into()));
    }
    let mut classes: Vec<u32> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Model("degenerate model: training labels contain a single class".into()));
    }
    let k = classes.len();
    let n = x.len();
    let yk: Vec<usize> = y.iter().map(|c| classes.binary_search(c).unwrap()).collect();
    let mut counts = vec![0usize; k];
    yk.iter().for_each(|&c| counts[c] += 1);
    let base: Vec<f64> = counts.iter().map(|&c| (c as f64 / n as f64).ln()).collect();

    let cols = Columns::new(x, d);
    let mut margins: Vec<f64> = (0..n).flat_map(|_| base.iter().copied()).collect();
    let mut probs = vec![0.0; n * k];
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut pos = vec![0u32; n];
    let mut importance = vec![0.0; d];
    let mut trees: Vec<Vec<Tree>> = vec![Vec::with_capacity(params.n_rounds); k];

    for _ in 0..params.n_rounds {
        for i in 0..n {
            let p = softmax(&margins[i * k..(i + 1) * k]);
            probs[i * k..(i + 1) * k].copy_from_slice(&p);
        }
        for c in 0..k {
            for i in 0..n {
                let p = probs[i * k + c];
                g[i] = p - if yk[i] == c { 1.0 } else { 0.0 };
                h[i] = (p * (1.0 - p)).max(1e-16);
            }
            let tree = build_tree(&cols, &g, &h, params, &mut importance, &mut pos);
            for i in 0..n {
                margins[i * k + c] += tree.nodes[pos[i] as usize].leaf;
            }
            trees[c].push(tree);
        }
    }
    Ok(GbtModel {
        classes,
        learning_rate: params.learning_rate,
        max_depth: params.max_depth,
        n_features: d,
        base,
        importance,
        trees,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    /// (max_depth, validation balanced accuracy)
    pub scores: Vec<(usize, f64)>,
    pub best_depth: usize,
}

/// Grid search over `depths` on a seeded hold-out split, then a refit of the
/// winning depth on all samples.
pub fn train_gbt<R: AsRef<[f64]>>(
    x: &[R],
    y: &[u32],
    depths: &[usize],
    validation_fraction: f64,
    seed: u64,
    params: &GbtParams,
) -> Result<(GbtModel, GridReport)> {
    if x.len() < 50 {
        return Err(Error::Model(format!("need at least 50 samples, got {}", x.len())));
    }
    let mut distinct: Vec<u32> = y.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Model("degenerate model: training labels contain a single class".into()));
    }
    if depths.is_empty() {
        return Err(Error::Model("empty max_depth grid".into()));
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.shuffle(&mut rng::stream(seed, "gbt-split"));
    let n_val = ((x.len() as f64 * validation_fraction).round() as usize).clamp(1, x.len() - 2);
    let (val, train) = idx.split_at(n_val);
    let xt: Vec<&[f64]> = train.iter().map(|&i| x[i].as_ref()).collect();
    let yt: Vec<u32> = train.iter().map(|&i| y[i]).collect();
    let yv: Vec<u32> = val.iter().map(|&i| y[i]).collect();

    let mut scores = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for &depth in depths {
        let m = fit(&xt, &yt, &GbtParams { max_depth: depth, ..*params })?;
        let pred: Vec<u32> = val
            .iter()
            .map(|&i| m.predict_class(x[i].as_ref()))
            .collect::<Result<_>>()?;
        let score = balanced_accuracy(&yv, &pred);
        log::info!("max_depth {depth}: validation balanced accuracy {score:.4}");
        scores.push((depth, score));
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((depth, score));
        }
    }
    let best_depth = best.unwrap().0;
    let model = fit(x, y, &GbtParams { max_depth: best_depth, ..*params })?;
    Ok((model, GridReport { scores, best_depth }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_binary_feature() {
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![(i % 2) as f64, (i % 7) as f64]).collect();
        let y: Vec<u32> = (0..100).map(|i| (i % 2) as u32 * 3).collect();
        let m = fit(&x, &y, &GbtParams { n_rounds: 30, ..Default::default() }).unwrap();
        assert_eq!(m.classes, vec![0, 3]);
        for (r, &l) in x.iter().zip(&y) {
            assert_eq!(m.predict_class(r).unwrap(), l);
        }
        let imp = m.feature_importance();
        assert!(imp[0] > 0.99);
    }

    #[test]
    fn single_class_is_degenerate() {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64]).collect();
        let y = vec![2u32; 60];
        let err = train_gbt(&x, &y, &[2], 0.2, 1, &GbtParams::default()).unwrap_err();
        assert!(err.to_string().contains("degenerate"));
    }

    #[test]
    fn text_round_trip() {
        let x: Vec<Vec<f64>> = (0..80).map(|i| vec![(i % 4) as f64, (i / 4) as f64 * 0.37]).collect();
        let y: Vec<u32> = (0..80).map(|i| (i % 3) as u32).collect();
        let m = fit(&x, &y, &GbtParams { n_rounds: 5, max_depth: 3, ..Default::default() }).unwrap();
        let back = GbtModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(GbtModel::from_text("nope").is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 2) as f64]).collect();
        let y: Vec<u32> = (0..40).map(|i| (i % 2) as u32).collect();
        let m = fit(&x, &y, &GbtParams { n_rounds: 2, ..Default::default() }).unwrap();
        assert!(m.predict_proba(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn log_loss_gradient_matches_residuals() {
        let z = [0.3, -1.2, 2.0];
        let r = pseudo_residuals(&z, 1);
        for k in 0..3 {
            let mut zp = z;
            let mut zm = z;
            zp[k] += 1e-6;
            zm[k] -= 1e-6;
            let fd = -(multinomial_log_loss(&zp, 1) - multinomial_log_loss(&zm, 1)) / 2e-6;
            assert!((fd - r[k]).abs() < 1e-8);
        }
    }
}
