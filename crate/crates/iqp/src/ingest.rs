//! Per-city tract tables.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use iqp_core::tract::{validate_records, TractRecord};
use iqp_core::Error as CoreError;

use crate::error::{Error, Result};

pub const COLUMNS: [&str; 11] = [
    "geoid",
    "city",
    "road_pct",
    "rail_pct",
    "house_age_pct",
    "park_pct",
    "walkability",
    "poi_density",
    "heat_days",
    "pm25_days",
    "median_income",
];

/// Loads and validates one city's CSV. Every row must carry `city`.
pub fn load_tracts(path: &Path, city: &str) -> Result<Vec<TractRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tracts(file, city).map_err(|e| match e {
        Error::Format { message, .. } => Error::format(path, message),
        e => e,
    })
}

pub fn read_tracts<R: Read>(reader: R, city: &str) -> Result<Vec<TractRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::format("<input>", e))?.clone();
    let mut idx = [0usize; 11];
    for (slot, name) in idx.iter_mut().zip(COLUMNS) {
        *slot = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CoreError::MissingColumn(name.into()))?;
    }
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::format("<input>", e))?;
        let cell = |c: usize| row.get(idx[c]).unwrap_or("");
        let num = |c: usize| -> Result<f64> {
            let raw = cell(c);
            raw.parse::<f64>().map_err(|_| {
                CoreError::NonNumericCell {
                    row: row_no,
                    column: COLUMNS[c].into(),
                    value: raw.into(),
                }
                .into()
            })
        };
        let found = cell(1);
        if found != city {
            return Err(CoreError::CityMismatch {
                row: row_no,
                expected: city.into(),
                found: found.into(),
            }
            .into());
        }
        let median_income = match cell(10) {
            "" => None,
            _ => Some(num(10)?),
        };
        records.push(TractRecord {
            geoid: cell(0).into(),
            city: found.into(),
            road_pct: num(2)?,
            rail_pct: num(3)?,
            house_age_pct: num(4)?,
            park_pct: num(5)?,
            walkability: num(6)?,
            poi_density: num(7)?,
            heat_days: num(8)?,
            pm25_days: num(9)?,
            median_income,
        });
    }
    validate_records(&records)?;
    Ok(records)
}

pub fn write_tracts<W: Write>(writer: W, records: &[TractRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::format("<output>", e);
    w.write_record(COLUMNS).map_err(err)?;
    for r in records {
        let f = r.features();
        let mut row = vec![r.geoid.clone(), r.city.clone()];
        row.extend(f.iter().map(f64::to_string));
        row.push(r.heat_days.to_string());
        row.push(r.pm25_days.to_string());
        row.push(r.median_income.map(|v| v.to_string()).unwrap_or_default());
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))
}

pub fn save_tracts(path: &Path, records: &[TractRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_tracts(std::io::BufWriter::new(file), records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str =
        "geoid,city,road_pct,rail_pct,house_age_pct,park_pct,walkability,poi_density,heat_days,pm25_days,median_income\n";

    fn parse(body: &str) -> Result<Vec<TractRecord>> {
        read_tracts(format!("{HEADER}{body}").as_bytes(), "la")
    }

    #[test]
    fn three_rows_round_trip() {
        let recs = parse(
            "a,la,10.5,2,40,80,12.25,0,5,1.5,52000\n\
             b,la,0,0,0,0,1,812.5,0,0,\n\
             c,la,100,100,100,100,20,3.3,9,2.75,0\n",
        )
        .unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[1].median_income, None);
        assert_eq!(recs[1].poi_density, 812.5);
        let mut buf = Vec::new();
        write_tracts(&mut buf, &recs).unwrap();
        assert_eq!(read_tracts(buf.as_slice(), "la").unwrap(), recs);
    }

    #[test]
    fn missing_column_is_named() {
        let src = "geoid,city,road_pct,rail_pct,house_age_pct,park_pct,poi_density,heat_days,pm25_days,median_income\n";
        let err = read_tracts(src.as_bytes(), "la").unwrap_err();
        assert!(matches!(err, Error::Core(CoreError::MissingColumn(ref c)) if c == "walkability"));
    }

    #[test]
    fn out_of_range_road() {
        let err = parse("a,la,135.2,2,40,80,12,0,5,1.5,52000\n").unwrap_err();
        assert!(matches!(err, Error::Core(CoreError::OutOfRange { ref column, .. }) if column == "road_pct"));
    }

    #[test]
    fn non_numeric_cell() {
        let err = parse("a,la,1,2,x,80,12,0,5,1.5,52000\n").unwrap_err();
        assert!(matches!(
            err,
            Error::Core(CoreError::NonNumericCell { row: 1, ref column, .. }) if column == "house_age_pct"
        ));
    }

    #[test]
    fn duplicate_geoid_and_city_mismatch() {
        let row = "a,la,1,2,3,80,12,0,5,1.5,52000\n";
        let err = parse(&format!("{row}{row}")).unwrap_err();
        assert!(matches!(err, Error::Core(CoreError::DuplicateGeoid(_))));
        let err = parse("a,ny,1,2,3,80,12,0,5,1.5,52000\n").unwrap_err();
        assert!(matches!(err, Error::Core(CoreError::CityMismatch { .. })));
    }

    #[test]
    fn missing_hazard_is_an_error() {
        assert!(parse("a,la,1,2,3,80,12,0,,1.5,52000\n").is_err());
    }

    fn record() -> impl Strategy<Value = TractRecord> {
        let pct = || 0.0f64..=100.0;
        (
            (pct(), pct(), pct(), pct()),
            (1.0f64..=20.0, 0.0f64..1e4, 0.0f64..365.0, 0.0f64..365.0),
            proptest::option::of(0.0f64..5e5),
        )
            .prop_map(|((road, rail, age, park), (walk, poi, heat, pm), income)| TractRecord {
                geoid: String::new(),
                city: "la".into(),
                road_pct: road,
                rail_pct: rail,
                house_age_pct: age,
                park_pct: park,
                walkability: walk,
                poi_density: poi,
                heat_days: heat,
                pm25_days: pm,
                median_income: income,
            })
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(mut recs in proptest::collection::vec(record(), 1..20)) {
            for (i, r) in recs.iter_mut().enumerate() {
                r.geoid = format!("06037{i:06}");
            }
            let mut buf = Vec::new();
            write_tracts(&mut buf, &recs).unwrap();
            prop_assert_eq!(read_tracts(buf.as_slice(), "la").unwrap(), recs);
        }
    }
}
