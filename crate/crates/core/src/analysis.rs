//! Post-hoc latent diagnostics: cross-domain Wasserstein-2, nearest
//! neighbour pairing and a 2D PCA projection.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::model::Model;
use crate::numkit::{DenseMatrix, SeededRng, Stream};
use crate::pushmini::{DomainDataset, Episode, ModelPolicy, NormBundle, Variant};
use crate::transport::{wasserstein2, W2Options};

/// Maximum subsample per domain for the Wasserstein-2 estimate.
pub const W2_SUBSAMPLE_CAP: usize = 64;
/// Subsample draws averaged into the reported distance.
pub const W2_DRAWS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub domain: Domain,
    pub variant: Variant,
    pub episode: usize,
    pub step: usize,
    pub latent: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LatentDump {
    pub samples: Vec<LatentSample>,
}

impl LatentDump {
    pub fn new(samples: Vec<LatentSample>) -> Result<Self> {
        if let Some(first) = samples.first() {
            if samples.iter().any(|s| s.latent.len() != first.latent.len()) {
                return Err(Error::contract("latent dims differ within the dump"));
            }
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.latent.len())
    }

    /// Indices and latent matrix of one domain, in dump order.
    pub fn domain_set(&self, domain: Domain) -> (Vec<usize>, DenseMatrix) {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.samples[i].domain == domain).collect();
        let data = idx
            .iter()
            .flat_map(|&i| self.samples[i].latent.iter().copied())
            .collect();
        let m = DenseMatrix::from_vec(idx.len(), self.dim(), data).expect("uniform latent dim");
        (idx, m)
    }

    /// The same samples with the domain labels exchanged.
    pub fn swapped(&self) -> Self {
        let samples = self
            .samples
            .iter()
            .map(|s| LatentSample {
                domain: match s.domain {
                    Domain::Source => Domain::Target,
                    Domain::Target => Domain::Source,
                },
                ..s.clone()
            })
            .collect();
        Self { samples }
    }
}

/// `k` distinct indices from `[0, n)` in ascending order.
fn subsample_indices(n: usize, k: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    let k = k.min(n);
    for i in 0..k {
        let j = i + rng.below(n - i);
        all.swap(i, j);
    }
    let mut out = all[..k].to_vec();
    out.sort_unstable();
    out
}

/// Encodes up to `max_per_domain` items of each embodiment.
pub fn dump_latents(
    model: &Model,
    norm: &NormBundle,
    episodes: &[Episode],
    max_per_domain: usize,
    seed: u64,
) -> Result<LatentDump> {
    let mut samples = Vec::new();
    for (k, domain) in [Domain::Source, Domain::Target].into_iter().enumerate() {
        let ds = DomainDataset::from_episodes(domain, episodes);
        if ds.is_empty() || max_per_domain == 0 {
            continue;
        }
        let mut rng = SeededRng::new(seed, Stream::Custom(100 + k as u64));
        let idx = subsample_indices(ds.len(), max_per_domain, &mut rng);
        let obs = ds.observations.select_rows(&idx);
        let z = model.encode_values(&ModelPolicy::encoder_input(norm, domain, &obs)?)?;
        for (r, &i) in idx.iter().enumerate() {
            samples.push(LatentSample {
                domain,
                variant: ds.variants[i],
                episode: ds.episode_ids[i],
                step: ds.steps[i],
                latent: z.row(r).to_vec(),
            });
        }
    }
    LatentDump::new(samples)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    /// Index into the dump.
    pub index: usize,
    pub sq_dist: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnEntry {
    /// Dump index of the target-domain query.
    pub query: usize,
    pub neighbors: Vec<Neighbor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    /// Mean over the subsample draws.
    pub w2: f64,
    pub w2_draws: Vec<f64>,
    pub knn: Vec<KnnEntry>,
    /// Share of nearest-neighbour pairs whose variants agree.
    pub same_variant_share: f64,
}

/// Brute-force `k` nearest rows of `reference` for each row of `queries`,
/// ordered by squared distance then index.
pub fn knn(queries: &DenseMatrix, reference: &DenseMatrix, k: usize) -> Vec<Vec<(usize, f64)>> {
    (0..queries.rows())
        .map(|q| {
            let mut d: Vec<(usize, f64)> = (0..reference.rows())
                .map(|r| {
                    let sq = queries
                        .row(q)
                        .iter()
                        .zip(reference.row(r))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (r, sq)
                })
                .collect();
            d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            d.truncate(k);
            d
        })
        .collect()
}

/// Symmetrised Wasserstein-2 estimate between two point sets: the mean of
/// both orientations, so the value does not depend on argument order.
pub fn symmetric_w2(a: &DenseMatrix, b: &DenseMatrix, options: &W2Options) -> Result<f64> {
    Ok(0.5 * (wasserstein2(a, b, options)? + wasserstein2(b, a, options)?))
}

/// W2 between the target and source latents (mean over [`W2_DRAWS`]
/// matched-size subsamples of at most [`W2_SUBSAMPLE_CAP`]) and the `k`
/// nearest source latents of every target latent.
pub fn latent_alignment_report(dump: &LatentDump, k: usize, seed: u64) -> Result<AlignmentReport> {
    let (s_idx, s) = dump.domain_set(Domain::Source);
    let (t_idx, t) = dump.domain_set(Domain::Target);
    if s_idx.is_empty() || t_idx.is_empty() {
        return Err(Error::contract("alignment report needs latents from both domains"));
    }
    if k == 0 {
        return Err(Error::contract("neighbour count must be at least 1"));
    }
    let n = s.rows().min(t.rows()).min(W2_SUBSAMPLE_CAP);
    let options = W2Options::default();
    let mut w2_draws = Vec::with_capacity(W2_DRAWS);
    for draw in 0..W2_DRAWS as u64 {
        // Each domain has its own stream, so exchanging the domain roles
        // selects the same subsets.
        let mut rs = SeededRng::new(seed.wrapping_add(draw), Stream::Custom(200));
        let mut rt = SeededRng::new(seed.wrapping_add(draw), Stream::Custom(201));
        let a = s.select_rows(&subsample_indices(s.rows(), n, &mut rs));
        let b = t.select_rows(&subsample_indices(t.rows(), n, &mut rt));
        w2_draws.push(symmetric_w2(&a, &b, &options)?);
    }
    let w2 = w2_draws.iter().sum::<f64>() / w2_draws.len() as f64;

    let knn = knn(&t, &s, k)
        .into_iter()
        .zip(&t_idx)
        .map(|(hits, &q)| KnnEntry {
            query: q,
            neighbors: hits
                .into_iter()
                .map(|(r, sq_dist)| Neighbor {
                    index: s_idx[r],
                    sq_dist,
                })
                .collect(),
        })
        .collect::<Vec<_>>();
    let same = knn
        .iter()
        .filter(|e| dump.samples[e.query].variant == dump.samples[e.neighbors[0].index].variant)
        .count();
    Ok(AlignmentReport {
        w2,
        w2_draws,
        same_variant_share: same as f64 / knn.len() as f64,
        knn,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca2 {
    /// `N x 2` projected coordinates.
    pub coords: DenseMatrix,
    /// Unit principal directions, `2 x D`.
    pub components: DenseMatrix,
    /// Top-two covariance eigenvalues.
    pub eigenvalues: [f64; 2],
    /// The second direction carries no variance and was zeroed.
    pub degenerate: bool,
}

/// Projection onto the top two principal components of the sample
/// covariance. Each direction is signed so its largest-magnitude loading
/// is positive.
pub fn pca2(points: &DenseMatrix) -> Result<Pca2> {
    let (n, d) = points.shape();
    if n < 2 {
        return Err(Error::contract("PCA needs at least two samples"));
    }
    if d < 1 {
        return Err(Error::contract("PCA needs at least one dimension"));
    }
    let mean = points.sum_rows().scale(1.0 / n as f64);
    let centered = DenseMatrix::from_fn(n, d, |i, j| points.get(i, j) - mean.get(0, j));
    let cov = centered.t_matmul(&centered)?.scale(1.0 / n as f64);
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, cov.data()));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = DenseMatrix::zeros(2, d);
    let mut eigenvalues = [0.0; 2];
    let top = eig.eigenvalues[order[0]].max(0.0);
    let mut degenerate = false;
    for (slot, &k) in order.iter().take(2).enumerate() {
        let lambda = eig.eigenvalues[k].max(0.0);
        if slot == 1 && lambda <= 1e-12 * top.max(f64::MIN_POSITIVE) {
            degenerate = true;
            continue;
        }
        let v = eig.eigenvectors.column(k);
        let pivot = (0..d)
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
            .unwrap();
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components.set(slot, j, sign * v[j]);
        }
        eigenvalues[slot] = lambda;
    }
    if d == 1 {
        degenerate = true;
    }
    let coords = centered.matmul_t(&components)?;
    Ok(Pca2 {
        coords,
        components,
        eigenvalues,
        degenerate,
    })
}

/// Metrics table: one summary block and one line per KNN hit.
pub fn report_csv(report: &AlignmentReport, dump: &LatentDump) -> String {
    let mut out = String::from("metric,value\n");
    let _ = writeln!(out, "w2_mean,{}", report.w2);
    for (k, w) in report.w2_draws.iter().enumerate() {
        let _ = writeln!(out, "w2_draw_{k},{w}");
    }
    let _ = writeln!(out, "knn1_same_variant_share,{}", report.same_variant_share);
    out.push_str("\nquery,query_variant,query_step,rank,neighbor,neighbor_variant,neighbor_step,sq_dist\n");
    for e in &report.knn {
        let q = &dump.samples[e.query];
        for (rank, nb) in e.neighbors.iter().enumerate() {
            let s = &dump.samples[nb.index];
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                e.query, q.variant, q.step, rank, nb.index, s.variant, s.step, nb.sq_dist
            );
        }
    }
    out
}

fn color(domain: Domain, variant: Variant) -> &'static str {
    match (domain, variant) {
        (Domain::Target, _) => "#e4572e",
        (Domain::Source, Variant::Base) => "#1f77b4",
        (Domain::Source, Variant::Purple) => "#7b3fa0",
        (Domain::Source, Variant::PurpleMirrored) => "#c77dff",
        (Domain::Source, Variant::WhiteMirrored) => "#7fb3d5",
    }
}

/// Scatter plot of PCA coordinates coloured by domain and variant.
pub fn pca_svg(pca: &Pca2, dump: &LatentDump) -> String {
    let (w, h, pad) = (640.0, 480.0, 30.0);
    let xs: Vec<f64> = (0..pca.coords.rows()).map(|i| pca.coords.get(i, 0)).collect();
    let ys: Vec<f64> = (0..pca.coords.rows()).map(|i| pca.coords.get(i, 1)).collect();
    let span = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, (hi - lo).max(1e-12))
    };
    let ((x0, xr), (y0, yr)) = (span(&xs), span(&ys));
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    for (i, s) in dump.samples.iter().enumerate() {
        let cx = pad + (xs[i] - x0) / xr * (w - 2.0 * pad);
        let cy = h - pad - (ys[i] - y0) / yr * (h - 2.0 * pad);
        let shape = match s.domain {
            Domain::Source => format!("<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"3\""),
            Domain::Target => format!(
                "<path d=\"M{:.2} {:.2} L{:.2} {:.2} L{:.2} {:.2} Z\"",
                cx,
                cy - 3.5,
                cx - 3.5,
                cy + 3.0,
                cx + 3.5,
                cy + 3.0
            ),
        };
        let _ = writeln!(
            out,
            "{shape} fill=\"{}\" fill-opacity=\"0.7\"><title>{} {} ep{} t{}</title></{}>",
            color(s.domain, s.variant),
            s.domain,
            s.variant,
            s.episode,
            s.step,
            if s.domain == Domain::Source { "circle" } else { "path" }
        );
    }
    out.push_str("</svg>\n");
    out
}
