//! Entities, interaction events, datasets, time splits and activity segments.
//!
//! Every other module consumes these types. They are immutable once built and
//! all operations here are pure.

use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Dense company index in `[0, num_companies)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CompanyId(pub u32);

/// Dense job-seeker index in `[0, num_seekers)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SeekerId(pub u32);

impl CompanyId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl SeekerId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for CompanyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "company {}", self.0)
    }
}

impl fmt::Display for SeekerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "seeker {}", self.0)
    }
}

/// One exposure of a seeker to a company, with the outcome of the scout/reply funnel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InteractionEvent {
    pub timestamp: i64,
    pub company: CompanyId,
    pub seeker: SeekerId,
    pub scout_sent: bool,
    pub replied: bool,
}

impl InteractionEvent {
    /// A match is a scout followed by a reply.
    pub fn match_label(&self) -> bool {
        self.scout_sent && self.replied
    }
}

/// Free-function form of [`InteractionEvent::match_label`].
pub fn match_label(event: &InteractionEvent) -> bool {
    event.match_label()
}

/// A time-ordered interaction log over a fixed company × seeker universe.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    events: Vec<InteractionEvent>,
    num_companies: u32,
    num_seekers: u32,
}

impl Dataset {
    /// Builds a dataset, checking ordering, id bounds, uniqueness of
    /// `(company, seeker, timestamp)` and the reply ⇒ scout funnel.
    pub fn new(events: Vec<InteractionEvent>, num_companies: u32, num_seekers: u32) -> Result<Self> {
        for (i, e) in events.iter().enumerate() {
            if e.company.0 >= num_companies {
                return Err(Error::UnknownEntity(format!("{} in event {i}", e.company)));
            }
            if e.seeker.0 >= num_seekers {
                return Err(Error::UnknownEntity(format!("{} in event {i}", e.seeker)));
            }
            if e.replied && !e.scout_sent {
                return Err(Error::DegenerateLabels(format!(
                    "event {i} has a reply without a scout"
                )));
            }
            if i > 0 && events[i - 1].timestamp > e.timestamp {
                return Err(Error::DegenerateLabels(format!("event {i} is out of timestamp order")));
            }
        }
        let mut keys: Vec<_> = events.iter().map(|e| (e.company, e.seeker, e.timestamp)).collect();
        keys.sort_unstable();
        if let Some(w) = keys.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DegenerateLabels(format!(
                "duplicate event for {} / {} at timestamp {}",
                w[0].0, w[0].1, w[0].2
            )));
        }
        Ok(Dataset {
            events,
            num_companies,
            num_seekers,
        })
    }

    pub fn events(&self) -> &[InteractionEvent] {
        &self.events
    }

    pub fn num_companies(&self) -> u32 {
        self.num_companies
    }

    pub fn num_seekers(&self) -> u32 {
        self.num_seekers
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn num_matches(&self) -> usize {
        self.events.iter().filter(|e| e.match_label()).count()
    }

    /// Contiguous sub-range of events sharing this dataset's universe.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            events: self.events[range].to_vec(),
            num_companies: self.num_companies,
            num_seekers: self.num_seekers,
        }
    }

    pub fn min_timestamp(&self) -> Option<i64> {
        self.events.first().map(|e| e.timestamp)
    }

    pub fn max_timestamp(&self) -> Option<i64> {
        self.events.last().map(|e| e.timestamp)
    }

    /// Reads the event CSV. Universe sizes are taken from `dims` when given,
    /// otherwise inferred as one past the largest id seen.
    pub fn read_csv<R: BufRead>(reader: R, source: &str, dims: Option<(u32, u32)>) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::parse(source, 1, "missing header"))?;
        if header.trim_end() != EVENT_HEADER {
            return Err(Error::parse(source, 1, format!("expected header `{EVENT_HEADER}`")));
        }
        let mut events = Vec::new();
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::parse(source, line_no, "expected 5 fields"));
            }
            let bad = |what: &str| Error::parse(source, line_no, format!("invalid {what}"));
            let timestamp: i64 = fields[0].parse().map_err(|_| bad("timestamp"))?;
            let company: u32 = fields[1].parse().map_err(|_| bad("company_id"))?;
            let seeker: u32 = fields[2].parse().map_err(|_| bad("seeker_id"))?;
            let scout_sent = parse_bit(fields[3]).ok_or_else(|| bad("scout_sent"))?;
            let replied = parse_bit(fields[4]).ok_or_else(|| bad("replied"))?;
            if replied && !scout_sent {
                return Err(Error::parse(source, line_no, "reply without a scout"));
            }
            if let Some(prev) = events.last() {
                let prev: &InteractionEvent = prev;
                if prev.timestamp > timestamp {
                    return Err(Error::parse(source, line_no, "timestamps not ascending"));
                }
            }
            events.push(InteractionEvent {
                timestamp,
                company: CompanyId(company),
                seeker: SeekerId(seeker),
                scout_sent,
                replied,
            });
        }
        let (nc, ns) = match dims {
            Some(d) => d,
            None => (
                events.iter().map(|e| e.company.0 + 1).max().unwrap_or(0),
                events.iter().map(|e| e.seeker.0 + 1).max().unwrap_or(0),
            ),
        };
        Dataset::new(events, nc, ns)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{EVENT_HEADER}")?;
        for e in &self.events {
            writeln!(
                out,
                "{},{},{},{},{}",
                e.timestamp, e.company.0, e.seeker.0, e.scout_sent as u8, e.replied as u8
            )?;
        }
        Ok(())
    }
}

pub const EVENT_HEADER: &str = "timestamp,company_id,seeker_id,scout_sent,replied";

fn parse_bit(s: &str) -> Option<bool> {
    match s {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

/// Match sparsity: matched events over the size of the company × seeker universe.
pub fn sparsity(dataset: &Dataset) -> Result<f64> {
    if dataset.num_companies == 0 || dataset.num_seekers == 0 {
        return Err(Error::EmptyMarket);
    }
    let universe = dataset.num_companies as f64 * dataset.num_seekers as f64;
    Ok(dataset.num_matches() as f64 / universe)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSplit {
    pub train: Dataset,
    pub test: Dataset,
    pub boundary_timestamp: i64,
}

/// Train gets every event strictly before `boundary`, test the rest.
pub fn split_by_time(dataset: &Dataset, boundary: i64) -> Result<TimeSplit> {
    let cut = dataset.events.partition_point(|e| e.timestamp < boundary);
    if cut == 0 || cut == dataset.len() {
        return Err(Error::DegenerateSplit(format!(
            "boundary {boundary} leaves {} train and {} test events",
            cut,
            dataset.len() - cut
        )));
    }
    Ok(TimeSplit {
        train: dataset.slice(0..cut),
        test: dataset.slice(cut..dataset.len()),
        boundary_timestamp: boundary,
    })
}

/// Timestamp at the given quantile of the event sequence, for use as a split boundary.
pub fn quantile_boundary(dataset: &Dataset, fraction: f64) -> Result<i64> {
    if dataset.is_empty() {
        return Err(Error::DegenerateSplit("empty dataset".into()));
    }
    let idx = ((dataset.len() as f64 * fraction).floor() as usize).min(dataset.len() - 1);
    Ok(dataset.events[idx].timestamp)
}

/// Company activity tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Segment {
    High,
    Middle,
    Low,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Segment::High, Segment::Middle, Segment::Low];

    pub fn as_str(self) -> &'static str {
        match self {
            Segment::High => "High",
            Segment::Middle => "Middle",
            Segment::Low => "Low",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Segment> {
        match s {
            "High" | "high" => Some(Segment::High),
            "Middle" | "middle" => Some(Segment::Middle),
            "Low" | "low" => Some(Segment::Low),
            _ => None,
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Segment of every company, indexed by company id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentAssignment {
    segments: Vec<Segment>,
}

impl SegmentAssignment {
    pub fn from_vec(segments: Vec<Segment>) -> Self {
        SegmentAssignment { segments }
    }

    pub fn get(&self, company: CompanyId) -> Option<Segment> {
        self.segments.get(company.index()).copied()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn count(&self, segment: Segment) -> usize {
        self.segments.iter().filter(|&&s| s == segment).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (CompanyId, Segment)> + '_ {
        self.segments.iter().enumerate().map(|(i, &s)| (CompanyId(i as u32), s))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "company_id,segment")?;
        for (c, s) in self.iter() {
            writeln!(out, "{},{}", c.0, s)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R, source: &str) -> Result<Self> {
        let mut segments = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if idx == 0 || line.is_empty() {
                continue;
            }
            let (id, seg) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(source, idx + 1, "expected 2 fields"))?;
            let id: usize = id
                .parse()
                .map_err(|_| Error::parse(source, idx + 1, "invalid company_id"))?;
            if id != segments.len() {
                return Err(Error::parse(source, idx + 1, "company ids must be dense and ordered"));
            }
            segments.push(Segment::parse(seg).ok_or_else(|| Error::parse(source, idx + 1, "invalid segment"))?);
        }
        Ok(SegmentAssignment { segments })
    }
}

/// Ranks companies by train-window scout volume and cuts the ranking into
/// equal terciles (ties by ascending id). Companies that sent no scouts are
/// always placed in `Low`.
pub fn assign_segments(train: &Dataset) -> SegmentAssignment {
    let n = train.num_companies as usize;
    let mut scouts = vec![0usize; n];
    for e in train.events.iter().filter(|e| e.scout_sent) {
        scouts[e.company.index()] += 1;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scouts[b].cmp(&scouts[a]).then(a.cmp(&b)));
    let mut segments = vec![Segment::Low; n];
    for (rank, &company) in order.iter().enumerate() {
        segments[company] = if scouts[company] == 0 {
            Segment::Low
        } else {
            Segment::ALL[3 * rank / n]
        };
    }
    SegmentAssignment { segments }
}
