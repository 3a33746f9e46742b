//! Uniform node placement and random-waypoint motion.

use rand::seq::index::sample;
use rand::Rng;

use crate::network::{NodeId, Point};
use crate::rng::RngStream;

pub const KMH_TO_MPS: f64 = 1000.0 / 3600.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityParams {
    pub area_side: f64,
    pub speed_min_kmh: f64,
    pub speed_max_kmh: f64,
    pub pause: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityState {
    pub is_mobile: bool,
    pub position: Point,
    pub waypoint: Point,
    /// km/h
    pub speed: f64,
    pub pause: f64,
    pause_left: f64,
}

impl MobilityState {
    pub fn stationary(position: Point) -> Self {
        Self {
            is_mobile: false,
            position,
            waypoint: position,
            speed: 0.0,
            pause: 0.0,
            pause_left: 0.0,
        }
    }
}

/// `count` i.i.d. uniform positions in `[0, side]^2`.
pub fn place_nodes(count: usize, side: f64, rng: &mut RngStream) -> Vec<Point> {
    (0..count)
        .map(|_| Point::new(rng.random_range(0.0..=side), rng.random_range(0.0..=side)))
        .collect()
}

/// Picks `floor(ratio * n)` mobile nodes, returned sorted.
pub fn assign_mobile_subset(n: usize, ratio: f64, rng: &mut RngStream) -> Vec<NodeId> {
    let ratio = ratio.clamp(0.0, 1.0);
    let k = ((ratio * n as f64) + 1e-9).floor() as usize;
    let mut ids: Vec<NodeId> = sample(rng, n, k.min(n)).into_iter().map(NodeId::from).collect();
    ids.sort_unstable();
    ids
}

/// Random-waypoint motion for a whole node population.
#[derive(Debug, Clone)]
pub struct Mobility {
    params: MobilityParams,
    states: Vec<MobilityState>,
    rng: RngStream,
    time: f64,
}

impl Mobility {
    pub fn new(params: MobilityParams, positions: &[Point], mobile: &[NodeId], mut rng: RngStream) -> Self {
        let mut states: Vec<MobilityState> = positions.iter().copied().map(MobilityState::stationary).collect();
        for &id in mobile {
            let s = &mut states[id.idx()];
            s.is_mobile = true;
            s.waypoint = draw_waypoint(&params, &mut rng);
            s.speed = draw_speed(&params, &mut rng);
            s.pause = params.pause;
        }
        Self {
            params,
            states,
            rng,
            time: 0.0,
        }
    }

    /// Population where nobody moves.
    pub fn fixed(positions: &[Point]) -> Self {
        let params = MobilityParams {
            area_side: f64::INFINITY,
            speed_min_kmh: 0.0,
            speed_max_kmh: 0.0,
            pause: 0.0,
        };
        Self::new(params, positions, &[], RngStream::new(0, "unused"))
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn states(&self) -> &[MobilityState] {
        &self.states
    }

    pub fn positions(&self) -> Vec<Point> {
        self.states.iter().map(|s| s.position).collect()
    }

    pub fn position(&self, id: NodeId) -> Point {
        self.states[id.idx()].position
    }

    /// Advances every node to absolute time `t` (must not go backwards).
    pub fn advance_to(&mut self, t: f64) {
        let dt = t - self.time;
        if dt <= 0.0 {
            return;
        }
        for i in 0..self.states.len() {
            if self.states[i].is_mobile {
                self.step_node(i, dt);
            }
        }
        self.time = t;
    }

    fn step_node(&mut self, i: usize, mut dt: f64) {
        // Bounded: with zero speed nothing moves and the loop exits immediately.
        for _ in 0..64 {
            if dt <= 0.0 {
                return;
            }
            let s = &mut self.states[i];
            if s.pause_left > 0.0 {
                let used = s.pause_left.min(dt);
                s.pause_left -= used;
                dt -= used;
                continue;
            }
            let v = s.speed * KMH_TO_MPS;
            if v <= 0.0 {
                return;
            }
            let remaining = s.position.dist(s.waypoint);
            let reach = remaining / v;
            if reach > dt + 1e-9 {
                let f = v * dt / remaining;
                s.position.x += (s.waypoint.x - s.position.x) * f;
                s.position.y += (s.waypoint.y - s.position.y) * f;
                return;
            }
            s.position = s.waypoint;
            dt = (dt - reach).max(0.0);
            s.pause_left = s.pause;
            let wp = draw_waypoint(&self.params, &mut self.rng);
            let sp = draw_speed(&self.params, &mut self.rng);
            let s = &mut self.states[i];
            s.waypoint = wp;
            s.speed = sp;
        }
    }
}

fn draw_waypoint(p: &MobilityParams, rng: &mut RngStream) -> Point {
    Point::new(rng.random_range(0.0..=p.area_side), rng.random_range(0.0..=p.area_side))
}

fn draw_speed(p: &MobilityParams, rng: &mut RngStream) -> f64 {
    if p.speed_max_kmh > p.speed_min_kmh {
        rng.random_range(p.speed_min_kmh..=p.speed_max_kmh)
    } else {
        p.speed_min_kmh
    }
}
