mod common;

use common::*;
use proptest::prelude::*;

use stationfill::ingest::{
    detect_gaps, expected_records, read_observations, read_station_meta, validate, write_observations, Bounds,
    IngestError,
};
use stationfill::model::GapClass;
use stationfill::{Cadence, Series, Series32, Variable};

const HEADER: &str = "station_id,timestamp,variable,value\n";

fn parse(body: &str) -> Result<Vec<Series>, IngestError> {
    read_observations(format!("{HEADER}{body}").as_bytes(), Cadence::default())
}

#[test]
fn table_metadata_row_parses() {
    let csv = "station_id,longitude,latitude,label\ns2n1,-1.524,52.057,\"1st nearest\"\n";
    let m = read_station_meta(csv.as_bytes()).unwrap();
    assert_eq!((m[0].longitude, m[0].latitude), (-1.524, 52.057));
    assert_eq!(m[0].label.as_deref(), Some("1st nearest"));
}

#[test]
fn metadata_errors() {
    let head = "station_id,longitude,latitude,label\n";
    let bad_lat = format!("{head}a,0,91,\n");
    assert!(matches!(read_station_meta(bad_lat.as_bytes()), Err(IngestError::CoordinateOutOfRange { line: 2, .. })));
    let dup = format!("{head}a,0,50,\na,1,50,\n");
    assert!(matches!(read_station_meta(dup.as_bytes()), Err(IngestError::DuplicateStationId { line: 3, .. })));
    let short = format!("{head}a,0\n");
    assert!(matches!(read_station_meta(short.as_bytes()), Err(IngestError::MalformedRow { line: 2, .. })));
    assert!(matches!(read_station_meta("id,lon,lat\n".as_bytes()), Err(IngestError::BadHeader { .. })));
}

#[test]
fn observation_errors() {
    let dup = "a,2015-01-01T00:00:00Z,temperature,1\na,2015-01-01T00:00:00Z,temperature,2\n";
    assert!(matches!(parse(dup), Err(IngestError::DuplicateSlot { line: 3, .. })));
    let off = "a,2015-01-01T00:07:00Z,temperature,1\n";
    assert!(matches!(parse(off), Err(IngestError::OffGridTimestamp { .. })));
    assert!(matches!(parse("a,2015-01-01T00:00:00Z,humidity,1\n"), Err(IngestError::UnknownVariable { .. })));
    assert!(matches!(parse("a,2015-01-01T00:00:00Z,rainfall,wet\n"), Err(IngestError::UnparseableValue { .. })));
    assert!(matches!(parse("a,2015-01-01T00:00:00Z,rainfall,NaN\n"), Err(IngestError::UnparseableValue { .. })));
    assert!(matches!(parse("a,yesterday,rainfall,1\n"), Err(IngestError::MalformedRow { line: 2, .. })));
}

#[test]
fn empty_and_null_are_both_absent_but_counted_apart() {
    let body = "a,2015-01-01T00:00:00Z,rainfall,0.2\n\
                a,2015-01-01T00:15:00Z,rainfall,\n\
                a,2015-01-01T00:30:00Z,rainfall,null\n\
                a,2015-01-01T00:45:00Z,rainfall,0\n";
    let s = parse(body).unwrap();
    assert_eq!(s[0].slots(), &[Some(0.2), None, None, Some(0.0)]);
    let t = &validate(&s, &Bounds::default()).series[0].totals;
    assert_eq!((t.present_records, t.null_records), (2, 1));
    assert_eq!(t.expected_records, 96);
    assert_eq!(t.missing_records, 93);
}

#[test]
fn out_of_bounds_values_are_counted_not_removed() {
    let body = "a,2015-01-01T00:00:00Z,temperature,61\na,2015-01-01T00:15:00Z,temperature,-35.2\n";
    let s = parse(body).unwrap();
    let r = validate(&s, &Bounds::default());
    assert_eq!(r.series[0].totals.out_of_bounds_records, 1);
    assert_eq!(s[0].get(0), Some(61.0));
}

#[test]
fn expected_records_follow_cadence() {
    let c15 = Cadence::default();
    assert_eq!(expected_records(365, c15), 35040);
    assert_eq!(expected_records(366, c15), 35136);
    assert_eq!(expected_records(295, c15), 28320);
    assert_eq!(expected_records(365, Cadence::from_minutes(60).unwrap()), 8760);
}

#[test]
fn one_hour_boundary_between_short_and_long() {
    let c = Cadence::default();
    assert_eq!(GapClass::classify(3, c), GapClass::Short);
    assert_eq!(GapClass::classify(4, c), GapClass::Long);
    let hourly = Cadence::from_minutes(60).unwrap();
    assert_eq!(GapClass::classify(1, hourly), GapClass::Long);
}

#[test]
fn grid_spanning_two_years_splits_counts() {
    let body = "a,2015-12-31T23:45:00Z,temperature,1\na,2016-01-01T00:00:00Z,temperature,2\n";
    let r = validate(&parse(body).unwrap(), &Bounds::default());
    let years: Vec<(i32, u32, u64)> = r.series[0].years.iter().map(|y| (y.year, y.days, y.counts.expected_records)).collect();
    assert_eq!(years, [(2015, 1, 96), (2016, 1, 96)]);
}

fn slots() -> impl Strategy<Value = Vec<Option<f64>>> {
    prop::collection::vec(prop::option::weighted(0.75, -40.0..60.0f64), 1..300)
}

proptest! {
    #[test]
    fn write_then_parse_is_identity(a in slots(), b in slots(), nulls in prop::collection::btree_set(0usize..300, 0..10)) {
        let mut s1 = series("s1", Variable::Temperature, a);
        let nulls: Vec<usize> = nulls.into_iter().filter(|&i| i < s1.len() && s1.get(i).is_none()).collect();
        s1 = s1.with_nulls(nulls);
        let s2 = series("s2", Variable::Rainfall, b.into_iter().map(|v| v.map(f64::abs)).collect());
        let mut buf = Vec::new();
        write_observations(&[s1.clone(), s2.clone()], &mut buf).unwrap();
        let back: Vec<Series> = read_observations(buf.as_slice(), Cadence::default()).unwrap();
        // trailing missing slots are written, so lengths survive
        prop_assert_eq!(back, vec![s1, s2]);
    }

    #[test]
    fn f32_round_trip(a in prop::collection::vec(prop::option::of(-40.0..60.0f32), 1..50)) {
        let s = Series32::new("x", Variable::Temperature, start(), Cadence::default(), a);
        let mut buf = Vec::new();
        write_observations(std::slice::from_ref(&s), &mut buf).unwrap();
        let back: Vec<Series32> = read_observations(buf.as_slice(), Cadence::default()).unwrap();
        prop_assert_eq!(back, vec![s]);
    }

    #[test]
    fn gaps_account_for_every_missing_slot(a in slots()) {
        let s = series("s", Variable::Temperature, a);
        let gaps = detect_gaps(&s);
        prop_assert_eq!(gaps.iter().map(|g| g.length).sum::<usize>(), s.missing_count());
        prop_assert!(gaps.windows(2).all(|w| w[0].first_slot + w[0].length < w[1].first_slot));
        for g in &gaps {
            prop_assert!(g.slots().all(|i| s.get(i).is_none()));
            prop_assert_eq!(g.class == GapClass::Short, g.length < 4);
        }
    }

    #[test]
    fn validation_accounts_for_every_expected_slot(a in slots(), offset_days in 0i64..400) {
        let start = start() + chrono::Duration::days(offset_days);
        let s = Series::new("s", Variable::Temperature, start, Cadence::default(), a);
        let r = validate(std::slice::from_ref(&s), &Bounds::default());
        for y in &r.series[0].years {
            let c = &y.counts;
            prop_assert_eq!(c.present_records + c.null_records + c.missing_records, c.expected_records);
            prop_assert_eq!(c.expected_records, 96 * y.days as u64);
        }
        prop_assert_eq!(r.series[0].totals.present_records as usize, s.present_count());
    }
}
