//! Estimation tables written by the `estimate` stage.

use std::io::Write;

use crate::error::Result;
use crate::estimation::EstimationResults;

/// `quintile,zeta,mean,median,sd`
pub fn write_bequest_summary_csv<W: Write>(res: &EstimationResults, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["quintile", "zeta", "mean", "median", "sd"])?;
    for b in &res.bequest {
        let (mean, sd) = b.dist.moments();
        wtr.write_record([
            b.dist.quintile.to_string(),
            format!("{:.6}", b.dist.zeta),
            format!("{mean:.6}"),
            format!("{:.6}", b.dist.quantile(0.5)),
            format!("{sd:.6}"),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `quintile,r,cdf`
pub fn write_cost_cdf_csv<W: Write>(res: &EstimationResults, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["quintile", "r", "cdf"])?;
    for c in &res.cost {
        for (r, f) in c.recovered.law.grid.iter().zip(&c.recovered.law.cdf) {
            wtr.write_record([c.quintile.to_string(), format!("{r:.8}"), format!("{f:.8}")])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// `group,beta,ci_low,ci_high,n,n_floor_excluded,identified`
pub fn write_beta_csv<W: Write>(res: &EstimationResults, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["group", "beta", "ci_low", "ci_high", "n", "n_floor_excluded", "identified"])?;
    for b in &res.beta {
        wtr.write_record([
            b.group_key.to_string(),
            format!("{:.8e}", b.beta),
            format!("{:.8e}", b.ci_low),
            format!("{:.8e}", b.ci_high),
            b.n.to_string(),
            b.n_floor_excluded.to_string(),
            u8::from(b.identified).to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `firm_a,firm_b,ks`
pub fn write_symmetry_csv<W: Write>(res: &EstimationResults, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["firm_a", "firm_b", "ks"])?;
    if let Some(s) = &res.symmetry {
        for (i, a) in s.firm_ids.iter().enumerate() {
            for (j, b) in s.firm_ids.iter().enumerate().skip(i + 1) {
                wtr.write_record([a.to_string(), b.to_string(), format!("{:.6}", s.ks[i][j])])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Detailed α cells: `channel,quintile,alpha,se,n_choices,rating_coef,flagged`
pub fn write_alpha_cells_csv<W: Write>(res: &EstimationResults, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["channel", "quintile", "alpha", "se", "n_choices", "rating_coef", "flagged"])?;
    for a in &res.alpha {
        wtr.write_record([
            a.channel.as_str().to_string(),
            a.quintile.to_string(),
            format!("{:.8e}", a.alpha),
            format!("{:.8e}", a.se),
            a.n_choices.to_string(),
            format!("{:.8e}", a.rating_coef),
            u8::from(a.flagged).to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
