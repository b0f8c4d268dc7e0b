//! CSV readers and writers for traces, event markers, volatility features and
//! event attributes, plus the feature/attribute join.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::kinematics::{EventTrace, VolatilityVector};
use crate::model::{AttributeRow, AttributeTable};
use crate::outcome::Outcome;

pub const TRACE_COLUMNS: [&str; 6] = ["event_id", "event_type", "t_sec", "speed_kph", "accel_long_mps2", "accel_lat_mps2"];
pub const EVENT_COLUMNS: [&str; 3] = ["event_id", "reaction_t_sec", "impact_t_sec"];

/// Relative tolerance on sampling-interval jitter.
const UNIFORM_TOLERANCE: f64 = 1e-3;

/// An event that could not be turned into a feature row.
#[derive(Debug, Clone, PartialEq)]
pub struct Reject {
    pub event_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceSet {
    pub traces: Vec<EventTrace>,
    pub rejects: Vec<Reject>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub event_id: String,
    pub event_type: Outcome,
    pub features: VolatilityVector,
}

struct Columns {
    index: HashMap<String, usize>,
}

impl Columns {
    fn new(headers: &csv::StringRecord, required: &[&str]) -> Result<Self> {
        let index: HashMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect();
        for r in required {
            if !index.contains_key(*r) {
                return Err(Error::schema(1, *r, "required column missing"));
            }
        }
        Ok(Columns { index })
    }

    fn get<'r>(&self, rec: &'r csv::StringRecord, name: &str) -> Option<&'r str> {
        self.index.get(name).and_then(|&i| rec.get(i)).map(str::trim)
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(false).from_reader(r)
}

fn parse_f64(row: usize, column: &str, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::schema(row, column, format!("`{s}` is not a finite number")))
}

fn parse_opt_f64(row: usize, column: &str, s: Option<&str>) -> Result<Option<f64>> {
    match s {
        None | Some("") => Ok(None),
        Some(s) => parse_f64(row, column, s).map(Some),
    }
}

fn parse_outcome(row: usize, column: &str, s: &str) -> Result<Outcome> {
    s.parse::<Outcome>()
        .map_err(|_| Error::schema(row, column, format!("`{s}` is not an outcome (baseline, near_crash, crash)")))
}

struct RawTrace {
    event_type: Outcome,
    t: Vec<f64>,
    speed: Vec<f64>,
    along: Vec<f64>,
    alat: Vec<f64>,
}

/// Reads the long-format trace CSV and an optional reaction/impact sidecar.
///
/// Malformed cells abort with a schema error. Traces that parse but cannot
/// be used (non-uniform sampling, markers outside the trace, too short) are
/// returned as rejects.
pub fn read_traces<R: Read, S: Read>(traces: R, events: Option<S>) -> Result<TraceSet> {
    let mut rdr = reader(traces);
    let cols = Columns::new(rdr.headers()?, &TRACE_COLUMNS)?;
    let mut order: Vec<String> = Vec::new();
    let mut raw: HashMap<String, RawTrace> = HashMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec?;
        let id = cols.get(&rec, "event_id").unwrap_or("").to_string();
        if id.is_empty() {
            return Err(Error::schema(row, "event_id", "empty event id"));
        }
        let et = parse_outcome(row, "event_type", cols.get(&rec, "event_type").unwrap_or(""))?;
        let num = |c: &str| parse_f64(row, c, cols.get(&rec, c).unwrap_or(""));
        let (t, v, al, at) = (num("t_sec")?, num("speed_kph")?, num("accel_long_mps2")?, num("accel_lat_mps2")?);
        let entry = raw.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            RawTrace {
                event_type: et,
                t: Vec::new(),
                speed: Vec::new(),
                along: Vec::new(),
                alat: Vec::new(),
            }
        });
        if entry.event_type != et {
            return Err(Error::schema(row, "event_type", format!("event {id} changes type mid-trace")));
        }
        entry.t.push(t);
        entry.speed.push(v);
        entry.along.push(al);
        entry.alat.push(at);
    }

    let mut markers: HashMap<String, (Option<f64>, Option<f64>)> = HashMap::new();
    if let Some(ev) = events {
        let mut rdr = reader(ev);
        let cols = Columns::new(rdr.headers()?, &EVENT_COLUMNS[..1])?;
        let mut orphans = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let row = k + 2;
            let rec = rec?;
            let id = cols.get(&rec, "event_id").unwrap_or("").to_string();
            let reaction = parse_opt_f64(row, "reaction_t_sec", cols.get(&rec, "reaction_t_sec"))?;
            let impact = parse_opt_f64(row, "impact_t_sec", cols.get(&rec, "impact_t_sec"))?;
            if !raw.contains_key(&id) {
                orphans.push(id.clone());
            }
            if markers.insert(id.clone(), (reaction, impact)).is_some() {
                return Err(Error::schema(row, "event_id", format!("event {id} listed twice")));
            }
        }
        if !orphans.is_empty() {
            return Err(Error::Join { orphans });
        }
    }

    let mut out = TraceSet::default();
    for id in order {
        let r = raw.remove(&id).expect("recorded");
        let (reaction_t, impact_t) = markers.get(&id).copied().unwrap_or((None, None));
        match assemble(&id, r, reaction_t, impact_t) {
            Ok(t) => out.traces.push(t),
            Err(reason) => out.rejects.push(Reject { event_id: id, reason }),
        }
    }
    Ok(out)
}

fn assemble(id: &str, r: RawTrace, reaction_t: Option<f64>, impact_t: Option<f64>) -> std::result::Result<EventTrace, String> {
    let n = r.t.len();
    if n < 2 {
        return Err(format!("{n} samples, need at least 2"));
    }
    let t0 = r.t[0];
    let dt = (r.t[n - 1] - t0) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err("timestamps do not increase".into());
    }
    for w in r.t.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > UNIFORM_TOLERANCE * dt {
            return Err(format!("non-uniform timestamps near t={}", w[0]));
        }
    }
    let index = |t: f64| -> std::result::Result<usize, String> {
        let k = ((t - t0) / dt).round();
        if k < 0.0 {
            Err(format!("marker at t={t} precedes the trace"))
        } else {
            Ok(k as usize)
        }
    };
    let (reaction_index, impact_index) = if r.event_type == Outcome::Baseline {
        (None, None)
    } else {
        (reaction_t.map(index).transpose()?, impact_t.map(index).transpose()?)
    };
    let trace = EventTrace {
        event_id: id.to_string(),
        event_type: r.event_type,
        sample_period: dt,
        speed: r.speed,
        accel_longitudinal: r.along,
        accel_lateral: r.alat,
        reaction_index,
        impact_index,
    };
    trace.validate().map_err(|e| e.to_string())?;
    Ok(trace)
}

fn fmt_f64(v: f64) -> String {
    v.to_string()
}

pub fn write_traces<W: Write>(w: W, traces: &[EventTrace]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(TRACE_COLUMNS)?;
    for t in traces {
        for k in 0..t.len() {
            w.write_record([
                t.event_id.clone(),
                t.event_type.as_str().to_string(),
                fmt_f64(k as f64 * t.sample_period),
                fmt_f64(t.speed[k]),
                fmt_f64(t.accel_longitudinal[k]),
                fmt_f64(t.accel_lateral[k]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_event_markers<W: Write>(w: W, traces: &[EventTrace]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(EVENT_COLUMNS)?;
    let t = |i: Option<usize>, dt: f64| i.map_or(String::new(), |i| fmt_f64(i as f64 * dt));
    for tr in traces {
        w.write_record([
            tr.event_id.clone(),
            t(tr.reaction_index, tr.sample_period),
            t(tr.impact_index, tr.sample_period),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rejects<W: Write>(w: W, rejects: &[Reject]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["event_id", "reason"])?;
    for r in rejects {
        w.write_record([&r.event_id, &r.reason])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_features<W: Write>(w: W, rows: &[FeatureRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    let mut header = vec!["event_id", "event_type"];
    header.extend(VolatilityVector::FIELD_NAMES);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.event_id.clone(), r.event_type.as_str().to_string()];
        rec.extend(r.features.values().iter().map(|v| v.map_or(String::new(), fmt_f64)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features<R: Read>(r: R) -> Result<Vec<FeatureRow>> {
    let mut rdr = reader(r);
    let mut required = vec!["event_id", "event_type"];
    required.extend(VolatilityVector::FIELD_NAMES);
    let cols = Columns::new(rdr.headers()?, &required)?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec?;
        let event_id = cols.get(&rec, "event_id").unwrap_or("").to_string();
        if !seen.insert(event_id.clone()) {
            return Err(Error::schema(row, "event_id", format!("event {event_id} listed twice")));
        }
        let event_type = parse_outcome(row, "event_type", cols.get(&rec, "event_type").unwrap_or(""))?;
        let mut vals = [None; 10];
        for (v, name) in vals.iter_mut().zip(VolatilityVector::FIELD_NAMES) {
            *v = parse_opt_f64(row, name, cols.get(&rec, name))?;
        }
        out.push(FeatureRow {
            event_id,
            event_type,
            features: VolatilityVector::from_values(vals),
        });
    }
    Ok(out)
}

/// Reads an attribute CSV: `event_id`, an optional `outcome` column, and
/// numeric covariates (empty cells are missing). Without `outcome`, each
/// row's outcome comes from `fallback` (usually the feature table).
pub fn read_attributes<R: Read>(r: R, fallback: Option<&HashMap<String, Outcome>>) -> Result<AttributeTable> {
    let mut rdr = reader(r);
    let headers = rdr.headers()?.clone();
    let cols = Columns::new(&headers, &["event_id"])?;
    let outcome_col = ["outcome", "event_type"].into_iter().find(|c| cols.index.contains_key(*c));
    let columns: Vec<String> = headers
        .iter()
        .map(str::trim)
        .filter(|h| *h != "event_id" && Some(*h) != outcome_col)
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec?;
        let event_id = cols.get(&rec, "event_id").unwrap_or("").to_string();
        if !seen.insert(event_id.clone()) {
            return Err(Error::schema(row, "event_id", format!("event {event_id} listed twice")));
        }
        let outcome = match outcome_col {
            Some(c) => parse_outcome(row, c, cols.get(&rec, c).unwrap_or(""))?,
            None => match fallback.and_then(|f| f.get(&event_id)) {
                Some(o) => *o,
                None => return Err(Error::schema(row, "outcome", "no outcome column and no feature row to take it from")),
            },
        };
        let values = columns
            .iter()
            .map(|c| parse_opt_f64(row, c, cols.get(&rec, c)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(AttributeRow {
            event_id,
            outcome,
            values,
        });
    }
    Ok(AttributeTable { columns, rows })
}

pub fn write_attributes<W: Write>(w: W, table: &AttributeTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    let mut header = vec!["event_id".to_string(), "outcome".to_string()];
    header.extend(table.columns.iter().cloned());
    w.write_record(&header)?;
    for r in &table.rows {
        let mut rec = vec![r.event_id.clone(), r.outcome.as_str().to_string()];
        rec.extend(r.values.iter().map(|v| v.map_or(String::new(), fmt_f64)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Inner join on `event_id`; any id present on one side only is an orphan.
/// Rows follow the attribute table's order; the attribute outcome wins.
pub fn join_features(features: &[FeatureRow], attributes: &AttributeTable) -> Result<AttributeTable> {
    let by_id: HashMap<&str, &FeatureRow> = features.iter().map(|f| (f.event_id.as_str(), f)).collect();
    let attr_ids: HashSet<&str> = attributes.rows.iter().map(|r| r.event_id.as_str()).collect();
    let mut orphans: Vec<String> = attributes
        .rows
        .iter()
        .filter(|r| !by_id.contains_key(r.event_id.as_str()))
        .map(|r| r.event_id.clone())
        .collect();
    orphans.extend(
        features
            .iter()
            .filter(|f| !attr_ids.contains(f.event_id.as_str()))
            .map(|f| f.event_id.clone()),
    );
    if !orphans.is_empty() {
        return Err(Error::Join { orphans });
    }
    for c in &attributes.columns {
        if VolatilityVector::FIELD_NAMES.contains(&c.as_str()) {
            return Err(Error::schema(1, c.clone(), "column appears in both feature and attribute tables"));
        }
    }
    let mut columns: Vec<String> = VolatilityVector::FIELD_NAMES.iter().map(|s| s.to_string()).collect();
    columns.extend(attributes.columns.iter().cloned());
    let rows = attributes
        .rows
        .iter()
        .map(|r| {
            let f = by_id[r.event_id.as_str()];
            let mut values: Vec<Option<f64>> = f.features.values().to_vec();
            values.extend(r.values.iter().copied());
            AttributeRow {
                event_id: r.event_id.clone(),
                outcome: r.outcome,
                values,
            }
        })
        .collect();
    Ok(AttributeTable { columns, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::volatility_indices;

    const TRACES: &str = "\
event_id,event_type,t_sec,speed_kph,accel_long_mps2,accel_lat_mps2
a,baseline,0.0,50,0.1,0.0
a,baseline,0.1,50.2,0.3,-0.1
a,baseline,0.2,50.3,-0.2,0.2
b,crash,10.0,40,0.5,0.1
b,crash,10.1,41,0.2,0.3
b,crash,10.2,42,-0.4,0.1
b,crash,10.3,42,0.1,-0.2
";

    #[test]
    fn reads_traces_with_markers() {
        let ev = "event_id,reaction_t_sec,impact_t_sec\nb,10.2,10.3\n";
        let set = read_traces(TRACES.as_bytes(), Some(ev.as_bytes())).unwrap();
        assert!(set.rejects.is_empty());
        assert_eq!(set.traces.len(), 2);
        let b = &set.traces[1];
        assert_eq!(b.reaction_index, Some(2));
        assert_eq!(b.impact_index, Some(3));
        assert!((b.sample_period - 0.1).abs() < 1e-12);
        assert_eq!(set.traces[0].speed, vec![50.0, 50.2, 50.3]);
    }

    #[test]
    fn missing_markers_reject_the_crash() {
        let set = read_traces(TRACES.as_bytes(), None::<&[u8]>).unwrap();
        assert_eq!(set.traces.len(), 1);
        assert_eq!(set.rejects[0].event_id, "b");
    }

    #[test]
    fn non_uniform_timestamps_rejected() {
        let text = TRACES.replace("a,baseline,0.2,", "a,baseline,0.35,");
        let set = read_traces(text.as_bytes(), None::<&[u8]>).unwrap();
        assert!(set.rejects.iter().any(|r| r.event_id == "a" && r.reason.contains("non-uniform")));
    }

    #[test]
    fn malformed_timestamp_names_column() {
        let text = TRACES.replace("a,baseline,0.1,", "a,baseline,zero,");
        match read_traces(text.as_bytes(), None::<&[u8]>) {
            Err(Error::Schema { column, row, .. }) => {
                assert_eq!(column, "t_sec");
                assert_eq!(row, 3);
            }
            other => panic!("{other:?}"),
        }
        let missing = "event_id,event_type,speed_kph\n";
        assert!(matches!(read_traces(missing.as_bytes(), None::<&[u8]>), Err(Error::Schema { .. })));
    }

    #[test]
    fn orphan_marker_is_join_error() {
        let ev = "event_id,reaction_t_sec,impact_t_sec\nb,,10.3\nzz,1,2\n";
        match read_traces(TRACES.as_bytes(), Some(ev.as_bytes())) {
            Err(Error::Join { orphans }) => assert_eq!(orphans, vec!["zz".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trace_round_trip() {
        let ev = "event_id,reaction_t_sec,impact_t_sec\nb,,10.3\n";
        let set = read_traces(TRACES.as_bytes(), Some(ev.as_bytes())).unwrap();
        let mut t = Vec::new();
        let mut e = Vec::new();
        write_traces(&mut t, &set.traces).unwrap();
        write_event_markers(&mut e, &set.traces).unwrap();
        let back = read_traces(&t[..], Some(&e[..])).unwrap();
        assert_eq!(back.traces.len(), 2);
        for (x, y) in set.traces.iter().zip(&back.traces) {
            assert_eq!(x.speed, y.speed);
            assert_eq!(x.impact_index, y.impact_index);
            assert_eq!(volatility_indices(x).ok(), volatility_indices(y).ok());
        }
    }

    #[test]
    fn features_round_trip_and_join() {
        let rows = vec![
            FeatureRow {
                event_id: "a".into(),
                event_type: Outcome::Crash,
                features: VolatilityVector::from_values([Some(0.5), None, Some(1.0), None, None, None, None, None, Some(40.0), Some(0.1)]),
            },
            FeatureRow {
                event_id: "b".into(),
                event_type: Outcome::Baseline,
                features: VolatilityVector::from_values([Some(1.0 / 3.0); 10]),
            },
        ];
        let mut buf = Vec::new();
        write_features(&mut buf, &rows).unwrap();
        let back = read_features(&buf[..]).unwrap();
        assert_eq!(back, rows);

        let fallback: HashMap<String, Outcome> = back.iter().map(|f| (f.event_id.clone(), f.event_type)).collect();
        let attrs = read_attributes("event_id,male\nb,1\na,\n".as_bytes(), Some(&fallback)).unwrap();
        assert_eq!(attrs.rows[1].outcome, Outcome::Crash);
        assert_eq!(attrs.rows[1].values, vec![None]);
        let joined = join_features(&back, &attrs).unwrap();
        assert_eq!(joined.columns.len(), 11);
        assert_eq!(joined.rows[0].event_id, "b");
        assert_eq!(joined.rows[0].values[10], Some(1.0));

        let extra = read_attributes("event_id,outcome,male\nb,baseline,1\na,crash,0\nc,crash,1\n".as_bytes(), None).unwrap();
        match join_features(&back, &extra) {
            Err(Error::Join { orphans }) => assert_eq!(orphans, vec!["c".to_string()]),
            other => panic!("{other:?}"),
        }
        let mut out = Vec::new();
        write_attributes(&mut out, &extra).unwrap();
        assert_eq!(read_attributes(&out[..], None).unwrap(), extra);
    }
}
