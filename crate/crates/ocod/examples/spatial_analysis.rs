//! Run the analysis toolkit on the fixture geography: Shannon entropy,
//! Moran's I over the adjacency list, and bootstrapped mean prices.

use std::path::Path;

use ocod::analyze::{
    morans_i, sample_mean_price, shannon_entropy, ArealSeries, PriceDistribution, SeriesKind,
    WeightMatrix,
};

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn main() -> anyhow::Result<()> {
    // Synthetic property counts over the fixture LSOA chain.
    let pairs = WeightMatrix::pairs_from_csv(&fixture("adjacency.csv"))?;
    let mut ids: Vec<String> = pairs
        .iter()
        .flat_map(|(a, b)| [a.clone(), b.clone()])
        .collect();
    ids.sort();
    ids.dedup();
    let values: Vec<f64> = (0..ids.len()).map(|i| ((i % 5) * (i % 3) + 1) as f64).collect();
    let counts = ArealSeries::new(ids.clone(), values, SeriesKind::Count)?;

    let entropy = shannon_entropy(&counts)?;
    println!(
        "{} areas, {:.0} properties, entropy {entropy:.3} bits (max {:.3})",
        ids.len(),
        counts.total(),
        (ids.len() as f64).log2()
    );

    let weights = WeightMatrix::from_pairs(ids, &pairs, true)?;
    println!("Moran's I: {:.4}", morans_i(&counts, &weights)?);

    // Bootstrap a mean price from the per-MSOA price lists.
    let dist = PriceDistribution::from_csv(&fixture("prices.csv"))?;
    let msoas: Vec<String> = {
        let mut m: Vec<String> = dist.prices.keys().cloned().collect();
        m.sort();
        m
    };
    let weights_per_msoa = vec![10.0; msoas.len()];
    let msoa_counts = ArealSeries::new(msoas, weights_per_msoa, SeriesKind::Count)?;
    let est = sample_mean_price(&msoa_counts, &dist, 501, 42)?;
    println!(
        "mean price {:.0} (95% interval {:.0} - {:.0}, {} replicates)",
        est.point_estimate,
        est.percentile_low,
        est.percentile_high,
        est.replicate_means.len()
    );
    Ok(())
}
