//! Retiree and firm tables, JSON helpers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::lifetables::{CovariateVector, Gender};
use crate::market::{FirmSpec, RetireeProfile};
use crate::preferences::Channel;

/// `id,age_months,gender,married,savings,cohort,channel,quintile,spouse_age_months,spouse_cohort`
#[derive(Debug, Serialize, Deserialize)]
struct RetireeRow {
    id: u64,
    age_months: f64,
    gender: Gender,
    married: u8,
    savings: f64,
    cohort: i32,
    channel: Channel,
    quintile: u8,
    spouse_age_months: Option<f64>,
    spouse_cohort: Option<i32>,
}

pub fn write_retirees_csv<W: Write>(retirees: &[RetireeProfile], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in retirees {
        let x = &r.covariates;
        wtr.serialize(RetireeRow {
            id: r.id,
            age_months: x.age_at_retirement,
            gender: x.gender,
            married: u8::from(x.married),
            savings: x.savings,
            cohort: x.birth_cohort,
            channel: r.channel,
            quintile: r.quintile,
            spouse_age_months: r.spouse.as_ref().map(|s| s.age_at_retirement),
            spouse_cohort: r.spouse.as_ref().map(|s| s.birth_cohort),
        })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_retirees_csv<R: Read>(r: R) -> Result<Vec<RetireeProfile>> {
    let mut out = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize() {
        let row: RetireeRow = row?;
        if !(1..=5).contains(&row.quintile) {
            return domain(format!("retiree {}: quintile {} out of range", row.id, row.quintile));
        }
        let married = row.married != 0;
        let covariates = CovariateVector {
            age_at_retirement: row.age_months,
            gender: row.gender,
            married,
            savings: row.savings,
            birth_cohort: row.cohort,
        };
        covariates.validate()?;
        let spouse = match (married, row.spouse_age_months, row.spouse_cohort) {
            (true, Some(age), Some(cohort)) => Some(CovariateVector {
                age_at_retirement: age,
                gender: row.gender.other(),
                married: true,
                savings: row.savings,
                birth_cohort: cohort,
            }),
            (true, _, _) => return domain(format!("retiree {}: married without spouse data", row.id)),
            (false, _, _) => None,
        };
        out.push(RetireeProfile { id: row.id, covariates, spouse, channel: row.channel, quintile: row.quintile });
    }
    Ok(out)
}

/// `id,rating`
pub fn write_firms_csv<W: Write>(firms: &[FirmSpec], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for f in firms {
        wtr.serialize(f)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_firms_csv<R: Read>(r: R) -> Result<Vec<FirmSpec>> {
    let mut out = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize() {
        let f: FirmSpec = row?;
        if !(1..=3).contains(&f.rating) {
            return domain(format!("firm {}: rating {} out of range", f.id, f.rating));
        }
        out.push(f);
    }
    Ok(out)
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ScenarioConfig;
    use crate::harness::synth::{synth_firms, synth_population};

    #[test]
    fn retirees_round_trip() {
        let cfg = ScenarioConfig { population: 300, ..ScenarioConfig::default() };
        let pop = synth_population(&cfg).unwrap();
        let mut buf = Vec::new();
        write_retirees_csv(&pop, &mut buf).unwrap();
        assert!(buf.starts_with(b"id,age_months,gender,married,savings,cohort,channel,quintile,spouse_age_months,spouse_cohort\n"));
        assert_eq!(read_retirees_csv(buf.as_slice()).unwrap(), pop);
    }

    #[test]
    fn firms_round_trip_and_reject_bad_rating() {
        let firms = synth_firms(&ScenarioConfig::default());
        let mut buf = Vec::new();
        write_firms_csv(&firms, &mut buf).unwrap();
        assert_eq!(read_firms_csv(buf.as_slice()).unwrap(), firms);
        assert!(read_firms_csv("id,rating\n0,7\n".as_bytes()).is_err());
    }

    #[test]
    fn married_row_needs_spouse() {
        let text = "id,age_months,gender,married,savings,cohort,channel,quintile,spouse_age_months,spouse_cohort\n\
                    0,780,male,1,50000,1950,afp,2,,\n";
        assert!(read_retirees_csv(text.as_bytes()).is_err());
    }
}
