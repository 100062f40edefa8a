//! Pearson and Spearman, including tied ranks.

use argsim::evalkit::{average_ranks, pearson, spearman};

fn main() -> argsim::Result<()> {
    let predicted = [0.91, 0.40, 0.40, 0.75, 0.12, 0.66];
    let gold = [4.8, 2.0, 2.5, 4.0, 0.5, 2.5];
    println!("ranks(predicted) = {:?}", average_ranks(&predicted));
    println!("ranks(gold)      = {:?}", average_ranks(&gold));
    println!("pearson  r   = {:.6}", pearson(&predicted, &gold)?);
    println!("spearman rho = {:.6}", spearman(&predicted, &gold)?);

    // Spearman only sees order, so a monotone distortion leaves it unchanged.
    let cubed: Vec<f64> = predicted.iter().map(|p| p * p * p).collect();
    println!("after cubing: r {:.6}, rho {:.6}", pearson(&cubed, &gold)?, spearman(&cubed, &gold)?);

    match pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]) {
        Ok(r) => println!("constant input gave {r}"),
        Err(e) => println!("constant input: {e}"),
    }
    Ok(())
}
