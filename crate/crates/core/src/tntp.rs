//! Reader and writer for the TNTP `_net.tntp` / `_trips.tntp` text formats.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::network::{Commodity, Edge, Network, NetworkError, TravelTimeFn};

fn parse_err(line: usize, message: impl Into<String>) -> NetworkError {
    NetworkError::Parse { line, message: message.into() }
}

/// Splits a `<KEY> value` metadata line.
fn metadata_entry(line: &str) -> Option<(&str, &str)> {
    let rest = line.strip_prefix('<')?;
    let close = rest.find('>')?;
    Some((rest[..close].trim(), rest[close + 1..].trim()))
}

struct NetHeader {
    nodes: usize,
    links: usize,
    first_thru_node: usize,
}

fn parse_header<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
) -> Result<NetHeader, NetworkError> {
    let mut meta = HashMap::new();
    let mut last_line = 0;
    let mut ended = false;
    for (no, raw) in lines.by_ref() {
        last_line = no;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('~') {
            continue;
        }
        match metadata_entry(line) {
            Some(("END OF METADATA", _)) => {
                ended = true;
                break;
            }
            Some((key, value)) => {
                meta.insert(key.to_ascii_uppercase(), (no, value.to_string()));
            }
            None => return Err(parse_err(no, format!("expected metadata entry, found {line:?}"))),
        }
    }
    if !ended {
        return Err(parse_err(last_line, "missing <END OF METADATA>"));
    }
    let get = |key: &str| -> Result<usize, NetworkError> {
        let (no, value) = meta
            .get(key)
            .ok_or_else(|| parse_err(last_line, format!("missing <{key}> in header")))?;
        value
            .parse::<usize>()
            .map_err(|_| parse_err(*no, format!("<{key}> must be a nonnegative integer, got {value:?}")))
    };
    Ok(NetHeader {
        nodes: get("NUMBER OF NODES")?,
        links: get("NUMBER OF LINKS")?,
        first_thru_node: get("FIRST THRU NODE")?,
    })
}

/// Parses a TNTP network and trip table into a validated [`Network`].
///
/// Columns after `power` are read past and ignored. Multiple entries for one
/// O-D pair are summed; zero-demand and intrazonal entries are dropped.
pub fn parse_tntp(net_text: &str, trips_text: &str) -> Result<Network, NetworkError> {
    let (num_vertices, edges) = parse_net(net_text)?;
    let commodities = parse_trips(trips_text, num_vertices)?;
    Network::new_validated(num_vertices, edges, commodities)
}

fn parse_net(text: &str) -> Result<(usize, Vec<Edge>), NetworkError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let header = parse_header(&mut lines)?;
    if header.first_thru_node > header.nodes.max(1) {
        return Err(NetworkError::Instance(format!(
            "<FIRST THRU NODE> {} exceeds node count {}",
            header.first_thru_node, header.nodes
        )));
    }
    let mut edges = Vec::with_capacity(header.links);
    for (no, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('~') {
            continue;
        }
        let body = line.split(';').next().unwrap_or("");
        let cols: Vec<&str> = body.split_whitespace().collect();
        if cols.len() < 7 {
            return Err(parse_err(no, format!("expected at least 7 columns, found {}", cols.len())));
        }
        let num = |i: usize, name: &str| -> Result<f64, NetworkError> {
            cols[i]
                .parse::<f64>()
                .map_err(|_| parse_err(no, format!("bad {name} value {:?}", cols[i])))
        };
        let node = |i: usize, name: &str| -> Result<usize, NetworkError> {
            let v: usize = cols[i]
                .parse()
                .map_err(|_| parse_err(no, format!("bad {name} node {:?}", cols[i])))?;
            if v == 0 || v > header.nodes {
                return Err(parse_err(no, format!("{name} node {v} outside 1..={}", header.nodes)));
            }
            Ok(v - 1)
        };
        let tail = node(0, "tail")?;
        let head = node(1, "head")?;
        let capacity = num(2, "capacity")?;
        let length = num(3, "length")?;
        let free_flow_time = num(4, "free_flow_time")?;
        let b = num(5, "b")?;
        let power = num(6, "power")?;
        if power < 0.0 || power.fract() != 0.0 || power > 64.0 {
            return Err(NetworkError::Instance(format!(
                "line {no}: power {power} is not a small nonnegative integer"
            )));
        }
        if !(capacity > 0.0) {
            return Err(NetworkError::Instance(format!("line {no}: nonpositive capacity {capacity}")));
        }
        let travel_time = TravelTimeFn::bpr_with(free_flow_time, capacity, b, power as u32)
            .map_err(|e| NetworkError::Instance(format!("line {no}: {e}")))?;
        edges.push(Edge { tail, head, travel_time, length });
    }
    if edges.len() != header.links {
        return Err(parse_err(
            text.lines().count(),
            format!("header declares {} links, found {}", header.links, edges.len()),
        ));
    }
    Ok((header.nodes, edges))
}

fn parse_trips(text: &str, num_vertices: usize) -> Result<Vec<Commodity>, NetworkError> {
    let mut demand: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut origin: Option<usize> = None;
    let check = |no: usize, v: usize| -> Result<usize, NetworkError> {
        if v == 0 || v > num_vertices {
            Err(parse_err(no, format!("zone {v} outside 1..={num_vertices}")))
        } else {
            Ok(v - 1)
        }
    };
    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('~') || metadata_entry(line).is_some() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("Origin") {
            let v: usize = rest
                .trim()
                .parse()
                .map_err(|_| parse_err(no, format!("bad origin {:?}", rest.trim())))?;
            origin = Some(check(no, v)?);
            continue;
        }
        let o = origin.ok_or_else(|| parse_err(no, "destination entry before any Origin line"))?;
        for entry in line.split(';') {
            let entry = entry.trim();
            if entry.is_empty() {
                continue;
            }
            let (dest, flow) = entry
                .split_once(':')
                .ok_or_else(|| parse_err(no, format!("expected `dest : flow`, found {entry:?}")))?;
            let d: usize = dest
                .trim()
                .parse()
                .map_err(|_| parse_err(no, format!("bad destination {:?}", dest.trim())))?;
            let d = check(no, d)?;
            let flow: f64 = flow
                .trim()
                .parse()
                .map_err(|_| parse_err(no, format!("bad flow {:?}", flow.trim())))?;
            if flow < 0.0 || !flow.is_finite() {
                return Err(NetworkError::Instance(format!("line {no}: negative demand {flow}")));
            }
            *demand.entry((o, d)).or_insert(0.0) += flow;
        }
    }
    Ok(demand
        .into_iter()
        .filter(|&((o, d), flow)| o != d && flow > 0.0)
        .map(|((origin, destination), demand)| Commodity {
            origin,
            destination,
            demand,
            value_of_time: 1.0,
        })
        .collect())
}

/// Writes the TNTP network file. Only BPR-shaped travel times are representable.
pub fn write_tntp_net(net: &Network) -> Result<String, NetworkError> {
    let mut out = String::new();
    let _ = writeln!(out, "<NUMBER OF ZONES> {}", net.num_vertices());
    let _ = writeln!(out, "<NUMBER OF NODES> {}", net.num_vertices());
    let _ = writeln!(out, "<FIRST THRU NODE> 1");
    let _ = writeln!(out, "<NUMBER OF LINKS> {}", net.num_edges());
    let _ = writeln!(out, "<END OF METADATA>\n");
    let _ = writeln!(
        out,
        "~\tinit_node\tterm_node\tcapacity\tlength\tfree_flow_time\tb\tpower\tspeed\ttoll\tlink_type\t;"
    );
    for (id, e) in net.edges().iter().enumerate() {
        let (fft, cap, b, power) = e.travel_time.as_bpr().ok_or_else(|| {
            NetworkError::Unrepresentable(format!("edge {id} travel time is not BPR-shaped"))
        })?;
        let b = exact_ratio(b, fft, e.travel_time.normalized_coefficients()[power as usize]);
        let _ = writeln!(
            out,
            "\t{}\t{}\t{cap:?}\t{:?}\t{fft:?}\t{b:?}\t{power}\t0\t0\t1\t;",
            e.tail + 1,
            e.head + 1,
            e.length
        );
    }
    Ok(out)
}

/// Nudges `b` by a few ulps so that `fft * b` reproduces the stored coefficient.
fn exact_ratio(mut b: f64, fft: f64, target: f64) -> f64 {
    if fft == 0.0 || b == 0.0 {
        return b;
    }
    for _ in 0..8 {
        let p = fft * b;
        if p == target {
            break;
        }
        b = if p < target { b.next_up() } else { b.next_down() };
    }
    b
}

/// Writes the trip table, one `Origin` block per origin with commodities.
pub fn write_tntp_trips(net: &Network) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "<NUMBER OF ZONES> {}", net.num_vertices());
    let _ = writeln!(out, "<TOTAL OD FLOW> {:?}", net.total_demand());
    let _ = writeln!(out, "<END OF METADATA>\n");
    let mut by_origin: BTreeMap<usize, Vec<&Commodity>> = BTreeMap::new();
    for c in net.commodities() {
        by_origin.entry(c.origin).or_default().push(c);
    }
    for (o, list) in by_origin {
        let _ = writeln!(out, "Origin {}", o + 1);
        for c in list {
            let _ = write!(out, "{} : {:?}; ", c.destination + 1, c.demand);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Diagnostic;

    const TWO_NODE_NET: &str = "<NUMBER OF ZONES> 2\n<NUMBER OF NODES> 2\n<FIRST THRU NODE> 1\n\
        <NUMBER OF LINKS> 1\n<END OF METADATA>\n\n~ init term cap len fft b power speed toll type ;\n\
        \t1\t2\t100\t3\t2.5\t0.15\t4\t0\t0\t1\t;\n";

    #[test]
    fn minimal_instance() {
        let net = parse_tntp(TWO_NODE_NET, "Origin 1\n 2 : 1.0;\n").unwrap();
        assert_eq!((net.num_vertices(), net.num_edges(), net.num_commodities()), (2, 1, 1));
        let e = net.edge(0);
        assert_eq!(e.length, 3.0);
        assert_eq!(e.travel_time.eval(0.0), 2.5);
        assert_eq!(e.travel_time.eval(100.0), 2.5 + 2.5 * 0.15);
        assert_eq!(net.commodity(0).value_of_time, 1.0);
    }

    #[test]
    fn empty_trips_gives_no_commodities() {
        let net = parse_tntp(TWO_NODE_NET, "").unwrap();
        assert_eq!(net.num_commodities(), 0);
        assert!(net.validate().is_empty());
    }

    #[test]
    fn duplicate_entries_summed_and_zeros_dropped() {
        let trips = "<NUMBER OF ZONES> 2\n<END OF METADATA>\nOrigin 1\n 1 : 5.0; 2 : 1.5; 2 : 0.5;\nOrigin 2\n 1 : 0.0;\n";
        let net = parse_tntp(TWO_NODE_NET, trips).unwrap();
        assert_eq!(net.num_commodities(), 1);
        assert_eq!(net.commodity(0).demand, 2.0);
    }

    #[test]
    fn malformed_header_reports_line() {
        let bad = "<NUMBER OF NODES> 2\n<NUMBER OF LINKS> x\n<FIRST THRU NODE> 1\n<END OF METADATA>\n";
        match parse_tntp(bad, "") {
            Err(NetworkError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let missing_end = "<NUMBER OF NODES> 2\n<NUMBER OF LINKS> 1\n";
        assert!(matches!(parse_tntp(missing_end, ""), Err(NetworkError::Parse { .. })));
        let garbage = "<NUMBER OF NODES> 2\nhello\n";
        match parse_tntp(garbage, "") {
            Err(NetworkError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn nonpositive_capacity_is_instance_error() {
        let net = TWO_NODE_NET.replace("\t100\t", "\t0\t");
        assert!(matches!(parse_tntp(&net, ""), Err(NetworkError::Instance(_))));
    }

    #[test]
    fn unreachable_demand_names_pair() {
        let err = parse_tntp(TWO_NODE_NET, "Origin 2\n 1 : 4.0;\n").unwrap_err();
        match &err {
            NetworkError::Validation(d) => {
                assert_eq!(
                    d,
                    &vec![Diagnostic::Unreachable { commodity: 0, origin: 1, destination: 0 }]
                );
            }
            other => panic!("expected validation error, got {other:?}"),
        }
        let msg = err.to_string();
        assert!(msg.contains("destination 1 unreachable from origin 2"), "{msg}");
    }

    #[test]
    fn writer_rejects_non_bpr() {
        let net = crate::network::build_pigou(2, 0.1, 1.0).unwrap();
        assert!(matches!(write_tntp_net(&net), Err(NetworkError::Unrepresentable(_))));
    }
}
