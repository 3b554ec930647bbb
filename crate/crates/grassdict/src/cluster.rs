//! Distance-matrix analytics: Gaussian similarities, affinity propagation,
//! consensus cluster ensembles, Hausdorff-linkage agglomeration, Laplacian
//! eigenmaps and session-purity scoring.
//!
//! Everything operates on plain symmetric distance matrices, so the same
//! pipeline applies to any of the dictionary set-distances.

use crate::linops::{self, Mat};
use crate::{Error, Result};

/// A hard clustering of `n` points: contiguous labels in `[0, k)`, every
/// cluster nonempty, optional exemplar indices (one per cluster).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    exemplars: Option<Vec<usize>>,
}

impl Partition {
    /// Relabels to contiguous `[0, k)` preserving the order of first
    /// appearance.
    pub fn new(raw_labels: &[usize], exemplars: Option<Vec<usize>>) -> Result<Self> {
        if raw_labels.is_empty() {
            return Err(Error::EmptySet("a partition needs at least one point".into()));
        }
        let mut mapping: Vec<usize> = Vec::new();
        let mut labels = Vec::with_capacity(raw_labels.len());
        for &l in raw_labels {
            let compact = match mapping.iter().position(|&m| m == l) {
                Some(pos) => pos,
                None => {
                    mapping.push(l);
                    mapping.len() - 1
                }
            };
            labels.push(compact);
        }
        Ok(Partition { labels, exemplars })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn exemplars(&self) -> Option<&[usize]> {
        self.exemplars.as_deref()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn cluster_count(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m + 1)
    }

    /// Members of each cluster, by label.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.cluster_count()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

fn check_distance_matrix(d: &Mat) -> Result<()> {
    if d.nrows() != d.ncols() || d.nrows() == 0 {
        return Err(Error::shape(format!("distance matrix must be square, got {}x{}", d.nrows(), d.ncols())));
    }
    let scale = d.amax().max(1.0);
    for i in 0..d.nrows() {
        if d[(i, i)].abs() > 1e-9 * scale {
            return Err(Error::invalid(format!("distance matrix diagonal entry {i} is not zero")));
        }
        for j in (i + 1)..d.ncols() {
            if (d[(i, j)] - d[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::invalid(format!("distance matrix is asymmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Symmetric similarity matrix; off-diagonals are Gaussian similarities,
/// the diagonal holds per-point exemplar preferences.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    matrix: Mat,
}

impl SimilarityMatrix {
    pub fn from_matrix(matrix: Mat) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::shape("similarity matrix must be square and nonempty"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("similarity matrix has non-finite entries"));
        }
        let scale = matrix.amax().max(1.0);
        for i in 0..matrix.nrows() {
            for j in (i + 1)..matrix.ncols() {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::invalid("similarity matrix is asymmetric"));
                }
            }
        }
        Ok(SimilarityMatrix { matrix })
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }
}

/// Gaussian similarities `s_ij = exp(-g_ij^2 / (2 sigma^2))`; the diagonal
/// (the affinity-propagation preference) is the similarity at the median
/// off-diagonal distance.
pub fn to_similarity(d: &Mat, sigma: f64) -> Result<SimilarityMatrix> {
    check_distance_matrix(d)?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid("sigma must be positive and finite"));
    }
    let n = d.nrows();
    let gauss = |g: f64| (-g * g / (2.0 * sigma * sigma)).exp();
    let mut off: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            off.push(d[(i, j)]);
        }
    }
    let preference = if off.is_empty() {
        1.0
    } else {
        off.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        let median = if off.len() % 2 == 1 {
            off[off.len() / 2]
        } else {
            0.5 * (off[off.len() / 2 - 1] + off[off.len() / 2])
        };
        gauss(median)
    };
    let mut s = Mat::from_fn(n, n, |i, j| if i == j { preference } else { gauss(d[(i, j)]) });
    for i in 0..n {
        s[(i, i)] = preference;
    }
    SimilarityMatrix::from_matrix(s)
}

/// Affinity-propagation outcome; `converged` is false when the exemplar set
/// still oscillated at the iteration cap (the last labeling is returned).
#[derive(Debug, Clone)]
pub struct ApResult {
    pub partition: Partition,
    pub converged: bool,
    pub iterations: usize,
}

const AP_DAMPING: f64 = 0.5;
const AP_CONVERGENCE_WINDOW: usize = 50;
const AP_MAX_ITER: usize = 500;

/// Affinity propagation (responsibility/availability message passing,
/// damping 0.5, 50-iteration stability window, 500-iteration cap). Every
/// point is assigned to its best exemplar after a final exemplar refinement
/// pass.
pub fn affinity_propagation(s: &SimilarityMatrix) -> Result<ApResult> {
    let n = s.len();
    let sm = s.matrix();
    if n == 1 {
        return Ok(ApResult {
            partition: Partition::new(&[0], Some(vec![0]))?,
            converged: true,
            iterations: 0,
        });
    }

    let mut r = Mat::zeros(n, n);
    let mut a = Mat::zeros(n, n);
    let mut exemplars: Vec<usize> = Vec::new();
    let mut stable_for = 0usize;
    let mut iterations = 0usize;
    let mut converged = false;

    for iter in 1..=AP_MAX_ITER {
        iterations = iter;
        // Responsibilities.
        for i in 0..n {
            // Largest and second-largest of a(i, k) + s(i, k) over k.
            let (mut best, mut second, mut best_k) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0usize);
            for k in 0..n {
                let v = a[(i, k)] + sm[(i, k)];
                if v > best {
                    second = best;
                    best = v;
                    best_k = k;
                } else if v > second {
                    second = v;
                }
            }
            for k in 0..n {
                let competitor = if k == best_k { second } else { best };
                let rv = sm[(i, k)] - competitor;
                r[(i, k)] = AP_DAMPING * r[(i, k)] + (1.0 - AP_DAMPING) * rv;
            }
        }
        // Availabilities.
        for k in 0..n {
            let mut positive_sum = 0.0;
            for i in 0..n {
                if i != k {
                    positive_sum += r[(i, k)].max(0.0);
                }
            }
            for i in 0..n {
                let av = if i == k {
                    positive_sum
                } else {
                    (r[(k, k)] + positive_sum - r[(i, k)].max(0.0)).min(0.0)
                };
                a[(i, k)] = AP_DAMPING * a[(i, k)] + (1.0 - AP_DAMPING) * av;
            }
        }
        let current: Vec<usize> = (0..n).filter(|&k| r[(k, k)] + a[(k, k)] > 0.0).collect();
        if !current.is_empty() && current == exemplars {
            stable_for += 1;
            if stable_for >= AP_CONVERGENCE_WINDOW {
                converged = true;
                break;
            }
        } else {
            stable_for = 0;
            exemplars = current;
        }
    }

    if exemplars.is_empty() {
        // Degenerate run: fall back to the single best candidate.
        let best = (0..n)
            .max_by(|&x, &y| {
                (r[(x, x)] + a[(x, x)]).partial_cmp(&(r[(y, y)] + a[(y, y)])).expect("finite")
            })
            .expect("n >= 1");
        exemplars = vec![best];
        converged = false;
    }

    // Assign to the most similar exemplar, then refine each cluster's
    // exemplar to the member maximizing intra-cluster similarity and
    // reassign once (ties to the lowest index).
    let assign = |exs: &[usize]| -> Vec<usize> {
        (0..n)
            .map(|i| {
                if let Some(pos) = exs.iter().position(|&e| e == i) {
                    return pos;
                }
                let mut best = 0usize;
                for (pos, &e) in exs.iter().enumerate() {
                    if sm[(i, e)] > sm[(i, exs[best])] {
                        best = pos;
                    }
                }
                best
            })
            .collect()
    };
    let first_pass = assign(&exemplars);
    let mut refined: Vec<usize> = Vec::with_capacity(exemplars.len());
    for c in 0..exemplars.len() {
        let members: Vec<usize> = (0..n).filter(|&i| first_pass[i] == c).collect();
        let mut best = exemplars[c];
        let mut best_score = f64::NEG_INFINITY;
        for &cand in &members {
            let score: f64 = members.iter().map(|&i| sm[(i, cand)]).sum();
            if score > best_score {
                best_score = score;
                best = cand;
            }
        }
        refined.push(best);
    }
    refined.sort_unstable();
    refined.dedup();
    let labels = assign(&refined);
    let partition = Partition::new(&labels, Some(refined))?;
    Ok(ApResult { partition, converged, iterations })
}

/// Consensus of several partitions of the same points.
#[derive(Debug, Clone)]
pub struct ConsensusResult {
    pub partition: Partition,
    /// Mean normalized mutual information between the consensus and each
    /// input partition.
    pub mean_nmi: f64,
}

/// Cluster-ensemble consensus: the co-association matrix (fraction of input
/// partitions grouping each pair) is clustered by average-linkage
/// agglomeration cut at `c` clusters.
pub fn consensus_ensemble(partitions: &[Partition], c: usize) -> Result<ConsensusResult> {
    let first = partitions.first().ok_or_else(|| Error::EmptySet("no partitions to combine".into()))?;
    let n = first.len();
    if partitions.iter().any(|p| p.len() != n) {
        return Err(Error::shape("partitions cover different point counts"));
    }
    if c == 0 || c > n {
        return Err(Error::invalid(format!("cluster count {c} must be in [1, {n}]")));
    }
    let mut co = Mat::zeros(n, n);
    for p in partitions {
        for i in 0..n {
            for j in 0..n {
                if p.labels()[i] == p.labels()[j] {
                    co[(i, j)] += 1.0;
                }
            }
        }
    }
    co /= partitions.len() as f64;
    let dist = Mat::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 - co[(i, j)] });
    let labels = average_linkage_cut(&dist, c);
    let partition = Partition::new(&labels, None)?;
    let mean_nmi = partitions
        .iter()
        .map(|p| normalized_mutual_information(partition.labels(), p.labels()))
        .sum::<f64>()
        / partitions.len() as f64;
    Ok(ConsensusResult { partition, mean_nmi })
}

/// Average-linkage agglomeration of a distance matrix, stopped at `c`
/// clusters (Lance-Williams update, ties to the smallest index pair).
fn average_linkage_cut(dist: &Mat, c: usize) -> Vec<usize> {
    let n = dist.nrows();
    let mut active: Vec<usize> = (0..n).collect();
    let mut size = vec![1.0f64; n];
    let mut d = dist.clone();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    while active.len() > c {
        let (mut ba, mut bb, mut best) = (0usize, 0usize, f64::INFINITY);
        for (ai, &x) in active.iter().enumerate() {
            for &y in &active[ai + 1..] {
                if d[(x, y)] < best {
                    best = d[(x, y)];
                    ba = x;
                    bb = y;
                }
            }
        }
        // Merge bb into ba.
        for &y in &active {
            if y == ba || y == bb {
                continue;
            }
            let merged = (size[ba] * d[(ba, y)] + size[bb] * d[(bb, y)]) / (size[ba] + size[bb]);
            d[(ba, y)] = merged;
            d[(y, ba)] = merged;
        }
        size[ba] += size[bb];
        let moved = std::mem::take(&mut members[bb]);
        members[ba].extend(moved);
        active.retain(|&x| x != bb);
    }
    let mut labels = vec![0usize; n];
    for (c_idx, &x) in active.iter().enumerate() {
        for &p in &members[x] {
            labels[p] = c_idx;
        }
    }
    labels
}

/// Normalized mutual information with square-root normalization,
/// `I(X; Y) / sqrt(H(X) H(Y))`, in `[0, 1]`.
pub fn normalized_mutual_information(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ka = a.iter().copied().max().map_or(0, |m| m + 1);
    let kb = b.iter().copied().max().map_or(0, |m| m + 1);
    let mut joint = vec![vec![0.0f64; kb]; ka];
    let mut pa = vec![0.0f64; ka];
    let mut pb = vec![0.0f64; kb];
    for (&x, &y) in a.iter().zip(b) {
        joint[x][y] += 1.0 / n;
        pa[x] += 1.0 / n;
        pb[y] += 1.0 / n;
    }
    let entropy = |p: &[f64]| -> f64 { -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>() };
    let ha = entropy(&pa);
    let hb = entropy(&pb);
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }
    if ha == 0.0 || hb == 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for x in 0..ka {
        for y in 0..kb {
            let pxy = joint[x][y];
            if pxy > 0.0 {
                mi += pxy * (pxy / (pa[x] * pb[y])).ln();
            }
        }
    }
    (mi / (ha * hb).sqrt()).clamp(0.0, 1.0)
}

/// One agglomerative merge: clusters `a` and `b` (ids as in scipy: points
/// are `0..n`, the merge at step `k` creates id `n + k`) joined at `height`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub step: usize,
    pub a: usize,
    pub b: usize,
    pub height: f64,
}

/// Stepwise dendrogram of `n - 1` merges.
#[derive(Debug, Clone)]
pub struct Dendrogram {
    pub merges: Vec<Merge>,
    pub observations: usize,
}

impl Dendrogram {
    /// Labels after cutting the dendrogram at `c` clusters.
    pub fn cut(&self, c: usize) -> Result<Vec<usize>> {
        let n = self.observations;
        if c == 0 || c > n {
            return Err(Error::invalid(format!("cluster count {c} must be in [1, {n}]")));
        }
        let mut parent: Vec<usize> = (0..(2 * n - 1)).collect();
        fn find(parent: &mut Vec<usize>, x: usize) -> usize {
            if parent[x] != x {
                let root = find(parent, parent[x]);
                parent[x] = root;
            }
            parent[x]
        }
        for (k, m) in self.merges.iter().enumerate().take(n - c) {
            let id = n + k;
            let ra = find(&mut parent, m.a);
            let rb = find(&mut parent, m.b);
            parent[ra] = id;
            parent[rb] = id;
        }
        let mut roots: Vec<usize> = Vec::new();
        let mut labels = vec![0usize; n];
        for p in 0..n {
            let root = find(&mut parent, p);
            let label = match roots.iter().position(|&r| r == root) {
                Some(pos) => pos,
                None => {
                    roots.push(root);
                    roots.len() - 1
                }
            };
            labels[p] = label;
        }
        Ok(labels)
    }
}

/// Agglomerative clustering with Hausdorff linkage: the distance between
/// two clusters is the discrete Hausdorff distance between their member
/// point sets (max of the two directed max-min distances). Ties are broken
/// by the smallest cluster-id pair.
pub fn hierarchical_hausdorff(d: &Mat) -> Result<Dendrogram> {
    check_distance_matrix(d)?;
    let n = d.nrows();
    if n == 1 {
        return Ok(Dendrogram { merges: Vec::new(), observations: 1 });
    }
    // point_min[p][c] = min distance from point p to cluster slot c.
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut ids: Vec<usize> = (0..n).collect();
    let mut active: Vec<usize> = (0..n).collect();
    let mut point_min = d.clone();
    let mut merges = Vec::with_capacity(n - 1);

    let hausdorff = |point_min: &Mat, members: &[Vec<usize>], x: usize, y: usize| -> f64 {
        let x_to_y =
            members[x].iter().map(|&p| point_min[(p, y)]).fold(f64::NEG_INFINITY, f64::max);
        let y_to_x =
            members[y].iter().map(|&p| point_min[(p, x)]).fold(f64::NEG_INFINITY, f64::max);
        x_to_y.max(y_to_x)
    };

    for step in 0..(n - 1) {
        let mut best = f64::INFINITY;
        let mut pick = (0usize, 0usize);
        let mut pick_ids = (usize::MAX, usize::MAX);
        for (ai, &x) in active.iter().enumerate() {
            for &y in &active[ai + 1..] {
                let h = hausdorff(&point_min, &members, x, y);
                let id_pair = (ids[x].min(ids[y]), ids[x].max(ids[y]));
                if h < best - 1e-15 || (h <= best + 1e-15 && id_pair < pick_ids) {
                    best = h;
                    pick = (x, y);
                    pick_ids = id_pair;
                }
            }
        }
        let (x, y) = pick;
        merges.push(Merge { step, a: pick_ids.0, b: pick_ids.1, height: best });
        // Merge y into x.
        for p in 0..n {
            let m = point_min[(p, x)].min(point_min[(p, y)]);
            point_min[(p, x)] = m;
        }
        let moved = std::mem::take(&mut members[y]);
        members[x].extend(moved);
        ids[x] = n + step;
        active.retain(|&s| s != y);
    }
    Ok(Dendrogram { merges, observations: n })
}

/// Binary symmetric k-nearest-neighbor graph Laplacian `L = D - W` of a
/// distance matrix, plus the connected-component label of every point.
pub fn graph_laplacian(d: &Mat, neighbors: usize) -> Result<(Mat, Vec<usize>)> {
    check_distance_matrix(d)?;
    let n = d.nrows();
    if neighbors == 0 || neighbors >= n {
        return Err(Error::invalid(format!("neighbors {neighbors} must be in [1, {})", n)));
    }
    let mut w = Mat::zeros(n, n);
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| d[(i, a)].partial_cmp(&d[(i, b)]).expect("finite").then(a.cmp(&b)));
        for &j in order.iter().take(neighbors) {
            w[(i, j)] = 1.0;
            w[(j, i)] = 1.0;
        }
    }
    let mut lap = -w.clone();
    for i in 0..n {
        let degree: f64 = w.row(i).iter().sum();
        lap[(i, i)] = degree;
    }
    // Connected components by BFS over W.
    let mut component = vec![usize::MAX; n];
    let mut next = 0usize;
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let mut queue = std::collections::VecDeque::from([start]);
        component[start] = next;
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if w[(u, v)] > 0.0 && component[v] == usize::MAX {
                    component[v] = next;
                    queue.push_back(v);
                }
            }
        }
        next += 1;
    }
    Ok((lap, component))
}

/// Laplacian-eigenmaps embedding.
#[derive(Debug, Clone)]
pub struct Embedding {
    /// `n x out_dim` coordinates.
    pub coordinates: Mat,
    /// Connected-component label per point.
    pub component_of: Vec<usize>,
    /// False when the kNN graph was disconnected and components were
    /// embedded separately (with an offset along the first axis).
    pub connected: bool,
}

/// Embed points into `out_dim` coordinates from the eigenvectors of the
/// `out_dim` smallest nonzero eigenvalues of the unnormalized kNN-graph
/// Laplacian (binary weights). A disconnected graph is embedded per
/// component, components offset along the first axis and flagged.
pub fn laplacian_eigenmaps(d: &Mat, neighbors: usize, out_dim: usize) -> Result<Embedding> {
    if out_dim == 0 {
        return Err(Error::invalid("out_dim must be positive"));
    }
    let (lap, component_of) = graph_laplacian(d, neighbors)?;
    let n = d.nrows();
    let component_count = component_of.iter().copied().max().unwrap_or(0) + 1;
    let mut coordinates = Mat::zeros(n, out_dim);

    for comp in 0..component_count {
        let points: Vec<usize> = (0..n).filter(|&i| component_of[i] == comp).collect();
        let m = points.len();
        if m == 1 {
            continue; // A singleton sits at the origin of its component.
        }
        let sub = Mat::from_fn(m, m, |a, b| lap[(points[a], points[b])]);
        let (values, vectors) = linops::sym_eigen(&sub)?;
        let scale = values.last().copied().unwrap_or(1.0).max(1.0);
        let mut taken = 0usize;
        for (idx, &val) in values.iter().enumerate() {
            if taken == out_dim {
                break;
            }
            if val <= 1e-9 * scale {
                continue; // Null space (the constant vector per component).
            }
            for (row, &p) in points.iter().enumerate() {
                coordinates[(p, taken)] = vectors[(row, idx)];
            }
            taken += 1;
        }
    }
    let connected = component_count == 1;
    if !connected {
        let spread = 2.0 + coordinates.amax();
        for i in 0..n {
            coordinates[(i, 0)] += component_of[i] as f64 * spread;
        }
    }
    Ok(Embedding { coordinates, component_of, connected })
}

/// Session-purity score in `[0, 1]`: the size-weighted majority fraction
/// over clusters, affinely rescaled so all-mixed scores 0 and all-pure
/// scores 1 (`2 * majority_fraction - 1`). Chance level is 0.5.
pub fn session_purity(partition: &Partition, session_a: &[bool]) -> Result<f64> {
    if session_a.len() != partition.len() {
        return Err(Error::shape("session labels do not match the partition size"));
    }
    let n = partition.len() as f64;
    let mut majority_total = 0.0;
    for members in partition.clusters() {
        let in_a = members.iter().filter(|&&p| session_a[p]).count();
        let maj = in_a.max(members.len() - in_a);
        majority_total += maj as f64;
    }
    Ok((2.0 * majority_total / n - 1.0).clamp(0.0, 1.0))
}
