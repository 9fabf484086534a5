//! AUC, PPV, fold summaries and audit precision on hand-made scores.

use ndarray::array;
use roboformer::metrics::{audit_precision, binary_auc, evaluate, fold_summary, AuditSample};

fn main() -> roboformer::Result<()> {
    let scores = [0.9, 0.8, 0.8, 0.3, 0.2];
    let positive = [true, false, true, false, false];
    println!("binary AUC with a tie: {:?}", binary_auc(&scores, &positive)?);

    let probs = array![
        [0.7, 0.2, 0.1],
        [0.1, 0.8, 0.1],
        [0.3, 0.3, 0.4],
        [0.5, 0.4, 0.1],
        [0.2, 0.2, 0.6]
    ];
    let labels = [0, 1, 2, 1, 2];
    let codes: Vec<String> = ["R1", "R2", "L1"].iter().map(|s| s.to_string()).collect();
    let report = evaluate(probs.view(), &labels, &codes)?;
    for c in &report.classes {
        println!("{:>3}: support {}, AUC {:?}, PPV {:?}", c.code, c.support, c.auc, c.ppv);
    }
    println!("macro AUC {:?}, macro PPV {:?}", report.macro_auc, report.macro_ppv);
    println!("confusion {:?}", report.confusion);

    let s = fold_summary(&[0.91, 0.88, 0.95, 0.90])?;
    println!("fold AUC {:.3} ± {:.3}", s.mean, s.std);

    let audit: Vec<AuditSample> = [("R1", "early", true), ("R1", "early", false), ("R2", "late", true)]
        .iter()
        .map(|&(c, s, v)| AuditSample {
            category: c.into(),
            stratum: Some(s.into()),
            verdict: Some(v),
        })
        .collect();
    for cell in audit_precision(&audit, &codes)? {
        if cell.total > 0 {
            println!(
                "audit {} {:?}: {}/{}",
                cell.category, cell.stratum, cell.correct, cell.total
            );
        }
    }
    Ok(())
}
