//! Glue between the event loop and the routing protocols.

use crate::clustering::Clustering;
use crate::engine::{EventHandle, EventQueue};
use crate::metrics::{Stats, TxRecord};
use crate::network::{Channel, NodeId};
use crate::packet::{DataPacket, Packet, PathKey};

/// Protocol timers.
#[derive(Debug, Clone, PartialEq)]
pub enum Timer {
    Discovery { dst: NodeId, seq: u64 },
    Repair { key: PathKey },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimEvent {
    MobilityTick,
    KeepAlive(NodeId),
    ClusterRound,
    SamRound,
    AppSend { flow: u32 },
    Deliver { to: NodeId, from: NodeId, packet: Packet },
    Timer { node: NodeId, timer: Timer },
    NodeFail(NodeId),
}

/// Timer and sizing parameters shared by the routing protocols.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutingParams {
    /// Sight-area radius in CH-hops.
    pub n: u32,
    pub t_sam: f64,
    pub t_ban: f64,
    pub discovery_timeout: f64,
    pub discovery_retries: u32,
    pub repair_timeout: f64,
}

impl Default for RoutingParams {
    fn default() -> Self {
        Self {
            n: 2,
            t_sam: 3.0,
            t_ban: 10.0,
            discovery_timeout: 1.0,
            discovery_retries: 2,
            repair_timeout: 0.5,
        }
    }
}

impl RoutingParams {
    pub fn max_eep_hops(&self) -> usize {
        crate::csa::max_eep_hops(self.n)
    }

    /// Age after which a remote sight-area entry is forgotten.
    pub fn sam_expiry(&self) -> f64 {
        2.0 * f64::from(self.n.max(1)) * self.t_sam + 1.0
    }
}

/// Everything a protocol handler may touch.
pub struct Ctx<'a> {
    pub now: f64,
    pub channel: &'a mut Channel,
    pub clustering: &'a Clustering,
    pub queue: &'a mut EventQueue<SimEvent>,
    pub stats: &'a mut Stats,
    pub params: &'a RoutingParams,
}

impl Ctx<'_> {
    fn record(&mut self, from: NodeId, to: Option<NodeId>, packet: &Packet, receivers: usize) {
        let rec = TxRecord {
            time: self.now,
            kind: packet.kind(),
            from,
            to,
            size: packet.size_bytes(),
            from_role: self.clustering.role(from),
            to_role: to.map(|t| self.clustering.role(t)),
            packet: packet.data_id(),
        };
        self.stats.record_tx(rec, receivers);
    }

    /// Unicast over one hop. Hands the packet back when `to` is out of range.
    pub fn transmit(&mut self, from: NodeId, to: NodeId, packet: Packet) -> Result<(), Packet> {
        if !self.channel.unicast(from, to, packet.size_bytes()) {
            return Err(packet);
        }
        self.record(from, Some(to), &packet, 1);
        let at = self.now + self.channel.params.hop_latency;
        self.queue
            .schedule(at, SimEvent::Deliver { to, from, packet })
            .expect("delivery is never in the past");
        Ok(())
    }

    /// One-hop broadcast; returns the number of receivers.
    pub fn broadcast(&mut self, from: NodeId, packet: Packet) -> usize {
        let receivers = self.channel.broadcast(from, packet.size_bytes());
        if !self.channel.is_alive(from) {
            return 0;
        }
        self.record(from, None, &packet, receivers.len());
        let at = self.now + self.channel.params.hop_latency;
        for &to in &receivers {
            self.queue
                .schedule(
                    at,
                    SimEvent::Deliver {
                        to,
                        from,
                        packet: packet.clone(),
                    },
                )
                .expect("delivery is never in the past");
        }
        receivers.len()
    }

    pub fn set_timer(&mut self, delay: f64, node: NodeId, timer: Timer) -> EventHandle {
        self.queue
            .schedule(self.now + delay, SimEvent::Timer { node, timer })
            .expect("timer delay is non-negative")
    }

    pub fn cancel(&mut self, handle: EventHandle) {
        self.queue.cancel(handle);
    }

    pub fn deliver(&mut self, packet: &DataPacket) {
        self.stats.delivered(packet.id, self.now, packet.hops);
    }

    pub fn drop_data(&mut self, packet: &DataPacket) {
        self.stats.dropped(packet.id);
    }
}
