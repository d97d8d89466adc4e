//! Itemized trainable-parameter breakdown for the benchmark configuration.
//!
//! Run with: cargo run --example count_parameters

use stsgcn::model::{count_params, EncoderVariant, ModelConfig};

fn main() -> stsgcn::Result<()> {
    let cfg = ModelConfig::new(EncoderVariant::Separable, 22, 10, 25);
    let count = count_params(&cfg)?;
    println!("separable model, V=22 T=10 K=25, widths 3-64-32-64-3, 4 decoder stages:\n");
    for (name, numel) in &count.groups {
        println!("  {name:<36} {numel:>7}");
    }
    println!("  {:<36} {:>7}", "total", count.total);

    let adjacency: usize = count
        .groups
        .iter()
        .filter(|(n, _)| n.ends_with(".space") || n.ends_with(".time"))
        .map(|(_, n)| n)
        .sum();
    println!(
        "\nadjacency stacks account for {adjacency} of {} parameters ({:.0}%)",
        count.total,
        adjacency as f64 / count.total as f64 * 100.0
    );
    Ok(())
}
