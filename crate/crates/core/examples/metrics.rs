//! Accuracy, macro P/R/F1 and the confusion matrix on hand-made predictions.

use mmsenti::metrics::{format_table, per_class};
use mmsenti::{compute_metrics, SentimentLabel};
use SentimentLabel::*;

fn main() -> mmsenti::Result<()> {
    let all_happy: Vec<_> = SentimentLabel::ALL.iter().map(|&g| (g, Happiness)).collect();
    let m1 = compute_metrics(&all_happy)?;

    let mut pairs = vec![(Like, Like); 3];
    pairs.push((Like, Anger));
    pairs.extend([(Anger, Like), (Anger, Like)]);
    pairs.extend(vec![(Anger, Anger); 4]);
    let m2 = compute_metrics(&pairs)?;

    print!("{}", format_table(&[("always Happiness".into(), m1.clone()), ("two-class toy".into(), m2.clone())]));
    println!("\nall-Happiness macro F1 = {:.4}", m1.macro_f1);
    println!("\n{}", m2.confusion_table());
    for l in [Like, Anger] {
        let (p, r, f) = per_class(&m2.confusion)[l.index()];
        println!("{l}: P={p:.3} R={r:.3} F1={f:.3}");
    }
    println!("\n{}", m2.to_json());
    Ok(())
}
