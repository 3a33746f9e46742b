//! Per-run counters, the five output metrics and batch aggregation.

use std::collections::BTreeMap;

use crate::network::{NodeId, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PacketKind {
    Data,
    KeepAlive,
    Sam,
    Rreq,
    Rrep,
    Rerr,
    Rpreq,
    Rprep,
    DvErr,
}

impl PacketKind {
    pub fn name(self) -> &'static str {
        match self {
            PacketKind::Data => "data",
            PacketKind::KeepAlive => "keepalive",
            PacketKind::Sam => "sam",
            PacketKind::Rreq => "rreq",
            PacketKind::Rrep => "rrep",
            PacketKind::Rerr => "rerr",
            PacketKind::Rpreq => "rpreq",
            PacketKind::Rprep => "rprep",
            PacketKind::DvErr => "dverr",
        }
    }

    pub fn plane(self) -> Plane {
        match self {
            PacketKind::Data => Plane::Data,
            PacketKind::KeepAlive => Plane::Clustering,
            _ => Plane::Control,
        }
    }
}

/// Accounting category of a transmission. Clustering traffic is common to all
/// protocols and excluded from routing overhead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Plane {
    Control,
    Data,
    Clustering,
}

impl Plane {
    pub fn name(self) -> &'static str {
        match self {
            Plane::Control => "control",
            Plane::Data => "data",
            Plane::Clustering => "clustering",
        }
    }
}

/// One transmission, as written to the packet trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TxRecord {
    pub time: f64,
    pub kind: PacketKind,
    pub from: NodeId,
    /// `None` for broadcasts.
    pub to: Option<NodeId>,
    pub size: u32,
    pub from_role: Role,
    pub to_role: Option<Role>,
    /// Data packet id, if any.
    pub packet: Option<u64>,
}

impl TxRecord {
    pub fn plane(&self) -> Plane {
        self.kind.plane()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fate {
    InFlight,
    Delivered { at: f64, hops: u32 },
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataRecord {
    pub flow: u32,
    pub sent_at: f64,
    pub fate: Fate,
}

/// Raw counters collected while a run executes.
#[derive(Debug, Clone, Default)]
pub struct Stats {
    /// Routing-control transmissions; a broadcast counts once.
    pub ctrl_tx: u64,
    pub ctrl_tx_bytes: u64,
    /// Routing-control packets processed by a receiver; a broadcast counts
    /// once per neighbour that hears it.
    pub ctrl_rx: u64,
    pub ctrl_rx_bytes: u64,
    pub sam_tx: u64,
    pub sam_rx_bytes: u64,
    pub data_tx: u64,
    pub keepalive_tx: u64,
    pub by_kind: BTreeMap<PacketKind, u64>,
    pub packets: Vec<DataRecord>,
    pub discovery_attempts: u64,
    pub discovery_failures: u64,
    /// Discoveries where a path existed in the sight area but exceeded the hop cap.
    pub cap_rejections: u64,
    pub repairs_two_hop: u64,
    pub repairs_full: u64,
    pub repairs_failed: u64,
    /// RERR handling events at cluster heads, keyed by loss event.
    pub rerr_processing: BTreeMap<(NodeId, u64), u64>,
    /// Hop counts of RERRs that reached an endpoint.
    pub rerr_endpoint_hops: Vec<u32>,
    pub max_eep_hops: usize,
    pub trace: Option<Vec<TxRecord>>,
}

impl Stats {
    pub fn with_trace(trace: bool) -> Self {
        Self {
            trace: trace.then(Vec::new),
            ..Self::default()
        }
    }

    pub fn record_tx(&mut self, rec: TxRecord, receivers: usize) {
        *self.by_kind.entry(rec.kind).or_default() += 1;
        match rec.plane() {
            Plane::Control => {
                let rx = receivers as u64;
                let size = u64::from(rec.size);
                self.ctrl_tx += 1;
                self.ctrl_tx_bytes += size;
                self.ctrl_rx += rx;
                self.ctrl_rx_bytes += rx * size;
                if rec.kind == PacketKind::Sam {
                    self.sam_tx += 1;
                    self.sam_rx_bytes += rx * size;
                }
            }
            Plane::Data => self.data_tx += 1,
            Plane::Clustering => self.keepalive_tx += 1,
        }
        if let Some(t) = self.trace.as_mut() {
            t.push(rec);
        }
    }

    /// Registers an application send and returns its packet id.
    pub fn app_sent(&mut self, flow: u32, t: f64) -> u64 {
        self.packets.push(DataRecord {
            flow,
            sent_at: t,
            fate: Fate::InFlight,
        });
        (self.packets.len() - 1) as u64
    }

    pub fn delivered(&mut self, id: u64, t: f64, hops: u32) {
        let rec = &mut self.packets[id as usize];
        debug_assert_eq!(rec.fate, Fate::InFlight, "packet {id} finished twice");
        if rec.fate == Fate::InFlight {
            rec.fate = Fate::Delivered { at: t, hops };
        }
    }

    pub fn dropped(&mut self, id: u64) {
        let rec = &mut self.packets[id as usize];
        if rec.fate == Fate::InFlight {
            rec.fate = Fate::Dropped;
        }
    }

    pub fn note_eep(&mut self, hops: usize) {
        self.max_eep_hops = self.max_eep_hops.max(hops);
    }
}

/// The per-run result row.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    /// Absent when the run had no application traffic.
    pub pdr: Option<f64>,
    /// Milliseconds, over delivered packets only.
    pub delay_ms: Option<f64>,
    pub energy_stddev: f64,
    /// Processed routing-control packets (receptions).
    pub ctrl_packets: u64,
    pub ctrl_bytes: u64,
    /// Same traffic counted once per transmission.
    pub ctrl_tx_packets: u64,
    pub ctrl_tx_bytes: u64,
    pub sam_bytes: u64,
    /// Discoveries refused because the only path broke the hop cap.
    pub cap_rejections: u64,
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
}

impl RunMetrics {
    /// Value of a named metric as written to CSV.
    pub fn get(&self, metric: &str) -> Option<f64> {
        match metric {
            "pdr" => self.pdr,
            "delay_ms" => self.delay_ms,
            "energy_stddev_j" => Some(self.energy_stddev),
            "ctrl_packets" => Some(self.ctrl_packets as f64),
            "ctrl_bytes" => Some(self.ctrl_bytes as f64),
            "ctrl_tx_packets" => Some(self.ctrl_tx_packets as f64),
            "ctrl_tx_bytes" => Some(self.ctrl_tx_bytes as f64),
            "sam_bytes" => Some(self.sam_bytes as f64),
            "cap_rejections" => Some(self.cap_rejections as f64),
            _ => None,
        }
    }
}

pub const METRICS: [&str; 5] = ["pdr", "delay_ms", "energy_stddev_j", "ctrl_packets", "ctrl_bytes"];

/// Extra counters written only to the per-run file.
pub const DIAGNOSTICS: [&str; 4] = ["ctrl_tx_packets", "ctrl_tx_bytes", "sam_bytes", "cap_rejections"];

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn compute_metrics(stats: &Stats, energy: &[f64]) -> RunMetrics {
    let mut delivered = 0u64;
    let mut dropped = 0u64;
    let mut in_flight = 0u64;
    let mut delay_sum = 0.0;
    for p in &stats.packets {
        match p.fate {
            Fate::Delivered { at, .. } => {
                delivered += 1;
                delay_sum += at - p.sent_at;
            }
            Fate::Dropped => dropped += 1,
            Fate::InFlight => in_flight += 1,
        }
    }
    let sent = stats.packets.len() as u64;
    RunMetrics {
        pdr: (sent > 0).then(|| delivered as f64 / sent as f64),
        delay_ms: (delivered > 0).then(|| delay_sum / delivered as f64 * 1000.0),
        energy_stddev: std_dev(energy),
        ctrl_packets: stats.ctrl_rx,
        ctrl_bytes: stats.ctrl_rx_bytes,
        ctrl_tx_packets: stats.ctrl_tx,
        ctrl_tx_bytes: stats.ctrl_tx_bytes,
        sam_bytes: stats.sam_rx_bytes,
        cap_rejections: stats.cap_rejections,
        sent,
        delivered,
        dropped,
        in_flight,
    }
}

/// Mean and 95% confidence half-width (normal approximation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub ci95: f64,
    pub runs: usize,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ci95 = if values.len() < 2 {
        0.0
    } else {
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        1.96 * (var / n).sqrt()
    };
    Some(Summary {
        mean,
        ci95,
        runs: values.len(),
    })
}

/// Per-metric summaries over a batch; runs where a metric is absent are skipped.
pub fn aggregate_batch(runs: &[RunMetrics], metrics: &[&str]) -> BTreeMap<String, Summary> {
    metrics
        .iter()
        .filter_map(|&m| {
            let xs: Vec<f64> = runs.iter().filter_map(|r| r.get(m)).collect();
            summarize(&xs).map(|s| (m.to_owned(), s))
        })
        .collect()
}
