//! Areal statistics over the enhanced dataset: joint undisclosed-use
//! probabilities, bootstrap price sampling, Shannon entropy, Moran's I
//! and country-of-incorporation breakdowns.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geolocate::PropertyRow;

/// What the aligned numbers in an [`ArealSeries`] mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    Count,
    Probability,
    Price,
}

/// One number per area, aligned to an ordered list of area codes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArealSeries {
    pub area_ids: Vec<String>,
    pub values: Vec<f64>,
    pub kind: SeriesKind,
}

impl ArealSeries {
    pub fn new(area_ids: Vec<String>, values: Vec<f64>, kind: SeriesKind) -> Result<ArealSeries> {
        if area_ids.len() != values.len() {
            return Err(Error::Data(format!(
                "areal series has {} areas but {} values",
                area_ids.len(),
                values.len()
            )));
        }
        for (id, v) in area_ids.iter().zip(&values) {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::Data(format!("area {id}: value {v} is not a non-negative number")));
            }
            if kind == SeriesKind::Probability && *v > 1.0 {
                return Err(Error::Data(format!("area {id}: probability {v} exceeds 1")));
            }
        }
        Ok(ArealSeries { area_ids, values, kind })
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    fn check_aligned(&self, other: &ArealSeries) -> Result<()> {
        if self.area_ids != other.area_ids {
            return Err(Error::Data("areal series are over different area orderings".into()));
        }
        Ok(())
    }

    /// Read a two-column CSV of (area, value).
    pub fn from_csv(path: &Path, kind: SeriesKind) -> Result<ArealSeries> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut area_ids = Vec::new();
        let mut values = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            let area = rec.get(0).unwrap_or("").trim();
            let value: f64 = rec
                .get(1)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| Error::Schema {
                    path: path.to_path_buf(),
                    detail: format!("non-numeric value for area {area}"),
                })?;
            area_ids.push(area.to_string());
            values.push(value);
        }
        ArealSeries::new(area_ids, values, kind)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("area,value\n");
        for (id, v) in self.area_ids.iter().zip(&self.values) {
            out.push_str(&format!("{id},{v}\n"));
        }
        out
    }
}

/// Empirical sale-price multisets keyed by MSOA.
#[derive(Debug, Clone, Default)]
pub struct PriceDistribution {
    pub prices: HashMap<String, Vec<f64>>,
}

impl PriceDistribution {
    pub fn insert(&mut self, msoa: &str, price: f64) -> Result<()> {
        if !(price > 0.0) {
            return Err(Error::Data(format!("price {price} for {msoa} is not positive")));
        }
        self.prices.entry(msoa.to_string()).or_default().push(price);
        Ok(())
    }

    /// Read a two-column CSV of (msoa, price).
    pub fn from_csv(path: &Path) -> Result<PriceDistribution> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut dist = PriceDistribution::default();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            let msoa = rec.get(0).unwrap_or("").trim();
            let price: f64 = rec
                .get(1)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| Error::Schema {
                    path: path.to_path_buf(),
                    detail: format!("non-numeric price for {msoa}"),
                })?;
            dist.insert(msoa, price)?;
        }
        Ok(dist)
    }
}

/// Sparse spatial weights over an ordered list of areas.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    pub area_ids: Vec<String>,
    /// Per-row (neighbour index, weight) pairs; no self-weights.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub total_weight: f64,
}

impl WeightMatrix {
    /// Build from adjacency pairs. `row_standardized` divides each row
    /// by its neighbour count; otherwise weights stay binary.
    pub fn from_pairs(
        area_ids: Vec<String>,
        pairs: &[(String, String)],
        row_standardized: bool,
    ) -> Result<WeightMatrix> {
        let index: HashMap<&str, usize> = area_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); area_ids.len()];
        for (a, b) in pairs {
            let (&i, &j) = match (index.get(a.as_str()), index.get(b.as_str())) {
                (Some(i), Some(j)) => (i, j),
                _ => continue,
            };
            if i == j {
                continue;
            }
            if !rows[i].iter().any(|(k, _)| *k == j) {
                rows[i].push((j, 1.0));
            }
            if !rows[j].iter().any(|(k, _)| *k == i) {
                rows[j].push((i, 1.0));
            }
        }
        if row_standardized {
            for row in &mut rows {
                let n = row.len() as f64;
                for (_, w) in row.iter_mut() {
                    *w /= n;
                }
            }
        }
        for row in &mut rows {
            row.sort_by_key(|(j, _)| *j);
        }
        let total_weight: f64 = rows.iter().flatten().map(|(_, w)| w).sum();
        if total_weight <= 0.0 {
            return Err(Error::Data("weight matrix has no connections".into()));
        }
        Ok(WeightMatrix { area_ids, rows, total_weight })
    }

    /// Read adjacency pairs from a two-column CSV (area_a, area_b).
    pub fn pairs_from_csv(path: &Path) -> Result<Vec<(String, String)>> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut pairs = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            let a = rec.get(0).unwrap_or("").trim().to_string();
            let b = rec.get(1).unwrap_or("").trim().to_string();
            if a.is_empty() || b.is_empty() {
                return Err(Error::Schema {
                    path: path.to_path_buf(),
                    detail: "adjacency row with empty area code".into(),
                });
            }
            pairs.push((a, b));
        }
        Ok(pairs)
    }
}

/// Bootstrap estimate over R replicate means.
#[derive(Debug, Clone, Serialize)]
pub struct SampledEstimate {
    pub replicate_means: Vec<f64>,
    pub point_estimate: f64,
    pub std_dev: f64,
    pub percentile_low: f64,
    pub percentile_high: f64,
    pub properties_per_replicate: u64,
}

/// Joint probability of being any undisclosed-use type: one minus the
/// product of per-type non-membership probabilities. When
/// `offshore_subset` names a series, that series is excluded from the
/// product and the result is the elementwise max with it instead.
pub fn udp_probability(
    per_type: &[&ArealSeries],
    offshore_subset: Option<usize>,
) -> Result<ArealSeries> {
    let first = per_type
        .first()
        .ok_or_else(|| Error::Data("no probability series supplied".into()))?;
    for s in per_type {
        first.check_aligned(s)?;
        if s.kind != SeriesKind::Probability {
            return Err(Error::Data("udp_probability expects probability series".into()));
        }
    }
    let values: Vec<f64> = (0..first.values.len())
        .map(|m| {
            let mut not_any = 1.0;
            for (i, s) in per_type.iter().enumerate() {
                if Some(i) != offshore_subset {
                    not_any *= 1.0 - s.values[m];
                }
            }
            let joint = 1.0 - not_any;
            match offshore_subset {
                Some(i) => joint.max(per_type[i].values[m]),
                None => joint,
            }
        })
        .collect();
    ArealSeries::new(first.area_ids.clone(), values, SeriesKind::Probability)
}

/// Expected undisclosed-use dwellings per area.
pub fn udp_count(prob: &ArealSeries, homes: &ArealSeries) -> Result<ArealSeries> {
    prob.check_aligned(homes)?;
    let values = prob
        .values
        .iter()
        .zip(&homes.values)
        .map(|(p, h)| p * h)
        .collect();
    ArealSeries::new(prob.area_ids.clone(), values, SeriesKind::Count)
}

/// Bootstrap the mean price: each replicate draws one price per property
/// uniformly with replacement from its MSOA's observed prices.
pub fn sample_mean_price(
    counts: &ArealSeries,
    dist: &PriceDistribution,
    replicates: u32,
    seed: u64,
) -> Result<SampledEstimate> {
    if replicates == 0 {
        return Err(Error::Data("at least one replicate is required".into()));
    }
    let mut sampled: Vec<(&[f64], u64)> = Vec::new();
    let mut z: u64 = 0;
    for (id, count) in counts.area_ids.iter().zip(&counts.values) {
        let n = count.round() as u64;
        if n == 0 {
            continue;
        }
        let prices = dist
            .prices
            .get(id)
            .filter(|p| !p.is_empty())
            .ok_or_else(|| Error::Data(format!("MSOA {id} has {n} properties but no observed prices")))?;
        sampled.push((prices, n));
        z += n;
    }
    if z == 0 {
        return Err(Error::Data("no properties to sample".into()));
    }
    // Per-replicate seeds keep the result invariant to execution order.
    let mut replicate_means: Vec<f64> = (0..replicates)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (r as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let mut sum = 0.0;
            for (prices, n) in &sampled {
                for _ in 0..*n {
                    sum += prices[rng.gen_range(0..prices.len())];
                }
            }
            sum / z as f64
        })
        .collect();
    let point_estimate = replicate_means.iter().sum::<f64>() / replicates as f64;
    let var = replicate_means
        .iter()
        .map(|m| (m - point_estimate).powi(2))
        .sum::<f64>()
        / replicates as f64;
    let mut sorted = replicate_means.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pct = |q: f64| sorted[((sorted.len() - 1) as f64 * q).round() as usize];
    let est = SampledEstimate {
        point_estimate,
        std_dev: var.sqrt(),
        percentile_low: pct(0.025),
        percentile_high: pct(0.975),
        properties_per_replicate: z,
        replicate_means: {
            replicate_means.shrink_to_fit();
            replicate_means
        },
    };
    Ok(est)
}

/// Total portfolio value: point estimate and percentile band scaled by
/// the total property count.
pub fn total_value(estimate: &SampledEstimate, counts: &ArealSeries) -> (f64, f64, f64) {
    let total = counts.total();
    (
        estimate.point_estimate * total,
        estimate.percentile_low * total,
        estimate.percentile_high * total,
    )
}

/// Shannon entropy of the areal distribution, in bits.
pub fn shannon_entropy(counts: &ArealSeries) -> Result<f64> {
    let total = counts.total();
    if total <= 0.0 {
        return Err(Error::Data("entropy of an all-zero series is undefined".into()));
    }
    // Kahan summation: thousands of near-equal terms otherwise drift
    // past 1e-12 of the closed form.
    let mut sum = 0.0;
    let mut carry = 0.0;
    for &c in counts.values.iter().filter(|&&c| c > 0.0) {
        let p = c / total;
        let term = -p * p.log2() - carry;
        let next = sum + term;
        carry = (next - sum) - term;
        sum = next;
    }
    Ok(sum)
}

/// Moran's I spatial autocorrelation statistic.
pub fn morans_i(x: &ArealSeries, weights: &WeightMatrix) -> Result<f64> {
    if x.area_ids != weights.area_ids {
        return Err(Error::Data("series and weight matrix are over different areas".into()));
    }
    let k = x.values.len() as f64;
    let mean = x.total() / k;
    let variance: f64 = x.values.iter().map(|v| (v - mean).powi(2)).sum();
    if variance == 0.0 {
        return Err(Error::Data("zero variance: Moran's I is undefined for a constant series".into()));
    }
    let mut cross = 0.0;
    for (i, row) in weights.rows.iter().enumerate() {
        let xi = x.values[i] - mean;
        for (j, w) in row {
            cross += w * xi * (x.values[*j] - mean);
        }
    }
    Ok((k / weights.total_weight) * (cross / variance))
}

/// One territory's share of the register.
#[derive(Debug, Clone, Serialize)]
pub struct CountryRow {
    pub country: String,
    pub titles: usize,
    pub properties: usize,
    pub nested_properties: usize,
    pub property_share: f64,
    pub nested_share: f64,
}

/// Group rows by country of incorporation, largest first.
pub fn country_breakdown(rows: &[PropertyRow]) -> Vec<CountryRow> {
    let mut by_country: BTreeMap<String, (std::collections::HashSet<String>, usize, usize)> =
        BTreeMap::new();
    let total = rows.len();
    let total_nested = rows.iter().filter(|r| r.nested).count();
    for row in rows {
        let country = if row.address.country_incorporated.is_empty() {
            "unknown".to_string()
        } else {
            row.address.country_incorporated.clone()
        };
        let entry = by_country.entry(country).or_default();
        entry.0.insert(row.address.title_number.clone());
        entry.1 += 1;
        if row.nested {
            entry.2 += 1;
        }
    }
    let mut out: Vec<CountryRow> = by_country
        .into_iter()
        .map(|(country, (titles, properties, nested))| CountryRow {
            country,
            titles: titles.len(),
            properties,
            nested_properties: nested,
            property_share: if total > 0 { properties as f64 / total as f64 } else { 0.0 },
            nested_share: if total_nested > 0 {
                nested as f64 / total_nested as f64
            } else {
                0.0
            },
        })
        .collect();
    out.sort_by(|a, b| b.properties.cmp(&a.properties).then(a.country.cmp(&b.country)));
    out
}

/// Partition into (individual, nested) rows for separate analysis.
pub fn split_nested(rows: &[PropertyRow]) -> (Vec<PropertyRow>, Vec<PropertyRow>) {
    rows.iter().cloned().partition(|r| !r.nested)
}

/// Count properties per area code extracted by `area_of`.
pub fn count_by_area(rows: &[PropertyRow], area_of: impl Fn(&PropertyRow) -> &str) -> ArealSeries {
    let mut counts: BTreeMap<String, f64> = BTreeMap::new();
    for row in rows {
        let area = area_of(row);
        if !area.is_empty() {
            *counts.entry(area.to_string()).or_default() += 1.0;
        }
    }
    let (area_ids, values) = counts.into_iter().unzip();
    ArealSeries { area_ids, values, kind: SeriesKind::Count }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn series(ids: &[&str], values: &[f64], kind: SeriesKind) -> ArealSeries {
        ArealSeries::new(
            ids.iter().map(|s| s.to_string()).collect(),
            values.to_vec(),
            kind,
        )
        .unwrap()
    }

    #[test]
    fn udp_probability_known_values() {
        let a = series(&["m1"], &[0.0], SeriesKind::Probability);
        let out = udp_probability(&[&a, &a], None).unwrap();
        assert_eq!(out.values[0], 0.0);

        let half = series(&["m1"], &[0.5], SeriesKind::Probability);
        let out = udp_probability(&[&half, &half], None).unwrap();
        assert_relative_eq!(out.values[0], 0.75);

        let p1 = series(&["m1"], &[0.1], SeriesKind::Probability);
        let p2 = series(&["m1"], &[0.2], SeriesKind::Probability);
        let p3 = series(&["m1"], &[0.3], SeriesKind::Probability);
        let out = udp_probability(&[&p1, &p2, &p3], None).unwrap();
        assert_relative_eq!(out.values[0], 1.0 - 0.9 * 0.8 * 0.7, epsilon = 1e-12);
    }

    #[test]
    fn udp_probability_subset_variant_excludes_offshore() {
        let offshore = series(&["m1"], &[0.6], SeriesKind::Probability);
        let low_use = series(&["m1"], &[0.2], SeriesKind::Probability);
        let out = udp_probability(&[&offshore, &low_use], Some(0)).unwrap();
        // Offshore excluded from the product, then max with it.
        assert_relative_eq!(out.values[0], 0.6);
        let out = udp_probability(&[&offshore, &low_use], None).unwrap();
        assert_relative_eq!(out.values[0], 1.0 - 0.4 * 0.8, epsilon = 1e-12);
    }

    #[test]
    fn udp_probability_bounds() {
        let p1 = series(&["a", "b"], &[0.3, 0.9], SeriesKind::Probability);
        let p2 = series(&["a", "b"], &[0.4, 0.8], SeriesKind::Probability);
        let out = udp_probability(&[&p1, &p2], None).unwrap();
        for m in 0..2 {
            let hi = p1.values[m].max(p2.values[m]);
            let sum = (p1.values[m] + p2.values[m]).min(1.0);
            assert!(out.values[m] >= hi - 1e-12);
            assert!(out.values[m] <= sum + 1e-12);
        }
    }

    #[test]
    fn udp_probability_mismatched_areas_errors() {
        let a = series(&["m1"], &[0.1], SeriesKind::Probability);
        let b = series(&["m2"], &[0.1], SeriesKind::Probability);
        assert!(udp_probability(&[&a, &b], None).is_err());
    }

    #[test]
    fn udp_count_is_elementwise_product() {
        let prob = series(&["a", "b"], &[0.1, 0.0], SeriesKind::Probability);
        let homes = series(&["a", "b"], &[1000.0, 0.0], SeriesKind::Count);
        let out = udp_count(&prob, &homes).unwrap();
        assert_eq!(out.values, vec![100.0, 0.0]);
    }

    #[test]
    fn degenerate_price_distribution_has_zero_spread() {
        let counts = series(&["m1"], &[7.0], SeriesKind::Count);
        let mut dist = PriceDistribution::default();
        dist.insert("m1", 100_000.0).unwrap();
        let est = sample_mean_price(&counts, &dist, 51, 42).unwrap();
        assert_eq!(est.point_estimate, 100_000.0);
        assert_eq!(est.std_dev, 0.0);
        assert_eq!(est.properties_per_replicate, 7);
    }

    #[test]
    fn price_estimate_approaches_weighted_mean() {
        // 10 homes at 100k and 30 homes at 300k: weighted mean 250k.
        let counts = series(&["m1", "m2"], &[10.0, 30.0], SeriesKind::Count);
        let mut dist = PriceDistribution::default();
        dist.insert("m1", 100_000.0).unwrap();
        dist.insert("m2", 300_000.0).unwrap();
        let est = sample_mean_price(&counts, &dist, 501, 42).unwrap();
        let se = est.std_dev / (est.replicate_means.len() as f64).sqrt();
        assert!(
            (est.point_estimate - 250_000.0).abs() <= 3.0 * se.max(1.0),
            "estimate {} too far from 250k (se {se})",
            est.point_estimate
        );
    }

    #[test]
    fn price_sampling_reproducible_and_seed_sensitive() {
        let counts = series(&["m1"], &[20.0], SeriesKind::Count);
        let mut dist = PriceDistribution::default();
        for p in [100_000.0, 200_000.0, 550_000.0] {
            dist.insert("m1", p).unwrap();
        }
        let a = sample_mean_price(&counts, &dist, 101, 7).unwrap();
        let b = sample_mean_price(&counts, &dist, 101, 7).unwrap();
        assert_eq!(a.replicate_means, b.replicate_means);
        let c = sample_mean_price(&counts, &dist, 101, 8).unwrap();
        assert_ne!(a.replicate_means, c.replicate_means);
    }

    #[test]
    fn price_sampling_spread_shrinks_with_z() {
        let mut dist = PriceDistribution::default();
        for p in [50_000.0, 150_000.0, 400_000.0, 900_000.0] {
            dist.insert("m1", p).unwrap();
        }
        let small = sample_mean_price(
            &series(&["m1"], &[10.0], SeriesKind::Count),
            &dist,
            201,
            42,
        )
        .unwrap();
        let large = sample_mean_price(
            &series(&["m1"], &[1000.0], SeriesKind::Count),
            &dist,
            201,
            42,
        )
        .unwrap();
        // Standard error scales like 1/sqrt(z): a 100x sample should cut
        // the spread by roughly 10x.
        let shrink = small.std_dev / large.std_dev;
        assert!(shrink > 5.0 && shrink < 20.0, "shrink factor {shrink}");
    }

    #[test]
    fn missing_prices_error_names_the_msoa() {
        let counts = series(&["m9"], &[3.0], SeriesKind::Count);
        let dist = PriceDistribution::default();
        let err = sample_mean_price(&counts, &dist, 11, 1).unwrap_err();
        assert!(err.to_string().contains("m9"), "{err}");
    }

    #[test]
    fn total_value_scales_by_count() {
        let counts = series(&["m1"], &[42_000.0], SeriesKind::Count);
        let est = SampledEstimate {
            replicate_means: vec![1_000_000.0],
            point_estimate: 1_000_000.0,
            std_dev: 0.0,
            percentile_low: 1_000_000.0,
            percentile_high: 1_000_000.0,
            properties_per_replicate: 42_000,
        };
        let (total, _, _) = total_value(&est, &counts);
        assert_relative_eq!(total, 42_000_000_000.0);
        let zero = series(&["m1"], &[0.0], SeriesKind::Count);
        assert_eq!(total_value(&est, &zero).0, 0.0);
    }

    #[test]
    fn entropy_known_values() {
        let one = series(&["a", "b", "c"], &[10.0, 0.0, 0.0], SeriesKind::Count);
        assert_eq!(shannon_entropy(&one).unwrap(), 0.0);
        let uniform = series(&["a", "b", "c", "d"], &[5.0; 4], SeriesKind::Count);
        assert_relative_eq!(shannon_entropy(&uniform).unwrap(), 2.0, epsilon = 1e-12);
        let zero = series(&["a"], &[0.0], SeriesKind::Count);
        assert!(shannon_entropy(&zero).is_err());
    }

    #[test]
    fn entropy_bounded_by_log_k() {
        let s = series(&["a", "b", "c", "d", "e"], &[1.0, 4.0, 2.0, 8.0, 1.0], SeriesKind::Count);
        let e = shannon_entropy(&s).unwrap();
        assert!(e <= (5.0f64).log2() + 1e-12);
        assert!(e > 0.0);
    }

    fn grid_pairs(n: usize) -> (Vec<String>, Vec<(String, String)>) {
        // n x n rook-adjacency grid.
        let id = |r: usize, c: usize| format!("g{r}_{c}");
        let mut ids = Vec::new();
        let mut pairs = Vec::new();
        for r in 0..n {
            for c in 0..n {
                ids.push(id(r, c));
                if c + 1 < n {
                    pairs.push((id(r, c), id(r, c + 1)));
                }
                if r + 1 < n {
                    pairs.push((id(r, c), id(r + 1, c)));
                }
            }
        }
        (ids, pairs)
    }

    fn naive_morans_i(x: &[f64], w: &[Vec<f64>]) -> f64 {
        let k = x.len() as f64;
        let mean = x.iter().sum::<f64>() / k;
        let mut total_w = 0.0;
        let mut cross = 0.0;
        for i in 0..x.len() {
            for j in 0..x.len() {
                total_w += w[i][j];
                cross += w[i][j] * (x[i] - mean) * (x[j] - mean);
            }
        }
        let variance: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        (k / total_w) * (cross / variance)
    }

    #[test]
    fn checkerboard_is_perfectly_anticorrelated() {
        let (ids, pairs) = grid_pairs(4);
        let values: Vec<f64> = (0..16).map(|i| ((i / 4 + i % 4) % 2) as f64).collect();
        let weights = WeightMatrix::from_pairs(ids.clone(), &pairs, true).unwrap();
        let x = ArealSeries::new(ids, values, SeriesKind::Count).unwrap();
        assert_relative_eq!(morans_i(&x, &weights).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn morans_i_matches_naive_reference() {
        use rand::Rng;
        let (ids, pairs) = grid_pairs(7);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for standardized in [true, false] {
            let values: Vec<f64> = (0..49).map(|_| rng.gen_range(0.0..10.0)).collect();
            let weights = WeightMatrix::from_pairs(ids.clone(), &pairs, standardized).unwrap();
            let mut dense = vec![vec![0.0; 49]; 49];
            for (i, row) in weights.rows.iter().enumerate() {
                for (j, w) in row {
                    dense[i][*j] = *w;
                }
            }
            let x = ArealSeries::new(ids.clone(), values.clone(), SeriesKind::Count).unwrap();
            let fast = morans_i(&x, &weights).unwrap();
            let slow = naive_morans_i(&values, &dense);
            assert_relative_eq!(fast, slow, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_series_errors() {
        let (ids, pairs) = grid_pairs(3);
        let weights = WeightMatrix::from_pairs(ids.clone(), &pairs, true).unwrap();
        let x = ArealSeries::new(ids, vec![5.0; 9], SeriesKind::Count).unwrap();
        let err = morans_i(&x, &weights).unwrap_err();
        assert!(err.to_string().contains("zero variance"), "{err}");
    }

    #[test]
    fn morans_i_rejects_misaligned_areas() {
        let (ids, pairs) = grid_pairs(3);
        let weights = WeightMatrix::from_pairs(ids.clone(), &pairs, true).unwrap();
        let mut other = ids.clone();
        other.swap(0, 1);
        let x = ArealSeries::new(other, (0..9).map(|i| i as f64).collect(), SeriesKind::Count)
            .unwrap();
        assert!(morans_i(&x, &weights).is_err());
    }

    fn row(title: &str, country: &str, nested: bool) -> PropertyRow {
        let mut address = crate::parse::ParsedAddress::default();
        address.title_number = title.to_string();
        address.country_incorporated = country.to_string();
        PropertyRow::new(address, String::new(), nested)
    }

    #[test]
    fn single_country_breakdown_is_total() {
        let rows = vec![row("t1", "JERSEY", false), row("t2", "JERSEY", true)];
        let table = country_breakdown(&rows);
        assert_eq!(table.len(), 1);
        assert_eq!(table[0].titles, 2);
        assert_eq!(table[0].properties, 2);
        assert_relative_eq!(table[0].property_share, 1.0);
        assert_relative_eq!(table[0].nested_share, 1.0);
    }

    #[test]
    fn breakdown_sorts_by_properties() {
        let rows = vec![
            row("t1", "GUERNSEY", false),
            row("t2", "JERSEY", false),
            row("t2", "JERSEY", false),
        ];
        let table = country_breakdown(&rows);
        assert_eq!(table[0].country, "JERSEY");
        assert_eq!(table[0].titles, 1);
        assert_eq!(table[0].properties, 2);
    }

    #[test]
    fn split_nested_partitions() {
        let rows = vec![row("t1", "X", false), row("t2", "X", true), row("t3", "X", false)];
        let (individual, nested) = split_nested(&rows);
        assert_eq!(individual.len(), 2);
        assert_eq!(nested.len(), 1);
        let all_single = vec![row("t1", "X", false)];
        assert!(split_nested(&all_single).1.is_empty());
    }

    #[test]
    fn count_by_area_groups_and_skips_blank() {
        let mut a = row("t1", "X", false);
        a.area.msoa = Some("m1".into());
        let mut b = row("t2", "X", false);
        b.area.msoa = Some("m1".into());
        let c = row("t3", "X", false);
        let counts = count_by_area(&[a, b, c], |r| r.area.msoa.as_deref().unwrap_or(""));
        assert_eq!(counts.area_ids, vec!["m1"]);
        assert_eq!(counts.values, vec![2.0]);
    }
}
