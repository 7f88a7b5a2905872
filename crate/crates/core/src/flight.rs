//! Tricopter kinematics, battery drain, the altitude rule and the mission
//! failsafe state machine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Vec3};
use crate::path::PathPlan;

/// Initial climb height before the crop check.
pub const TAKEOFF_ALTITUDE_M: f64 = 1.0;
/// Clearance kept above the crop canopy.
pub const CROP_CLEARANCE_M: f64 = 0.20;
pub const ARRIVAL_TOLERANCE_M: f64 = 0.05;
pub const LANDING_TOLERANCE_M: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TricopterParams {
    pub cruise_speed_mps: f64,
    pub climb_rate_mps: f64,
    pub yaw_rate_dps: f64,
    pub hover_power_w: f64,
    pub cruise_power_w: f64,
    pub battery_capacity_j: f64,
    pub low_battery_fraction: f64,
}

impl Default for TricopterParams {
    fn default() -> Self {
        Self {
            cruise_speed_mps: 3.0,
            climb_rate_mps: 1.0,
            yaw_rate_dps: 180.0,
            hover_power_w: 90.0,
            cruise_power_w: 110.0,
            battery_capacity_j: 360_000.0,
            low_battery_fraction: 0.2,
        }
    }
}

impl TricopterParams {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("tricopter.cruise_speed_mps", self.cruise_speed_mps),
            ("tricopter.climb_rate_mps", self.climb_rate_mps),
            ("tricopter.yaw_rate_dps", self.yaw_rate_dps),
            ("tricopter.hover_power_w", self.hover_power_w),
            ("tricopter.cruise_power_w", self.cruise_power_w),
            ("tricopter.battery_capacity_j", self.battery_capacity_j),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, format!("must be positive, got {v}")));
            }
        }
        if !(self.low_battery_fraction > 0.0 && self.low_battery_fraction < 1.0) {
            return Err(Error::config(
                "tricopter.low_battery_fraction",
                "must lie strictly between 0 and 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Idle,
    Takeoff,
    AltitudeCheck,
    Cruise,
    Return,
    Landed,
    Crashed,
    Beacon,
}

impl Mode {
    pub fn is_airborne(self) -> bool {
        matches!(
            self,
            Mode::Takeoff | Mode::AltitudeCheck | Mode::Cruise | Mode::Return
        )
    }

    /// Nothing further happens to the airframe in these modes.
    pub fn is_terminal(self) -> bool {
        matches!(self, Mode::Landed | Mode::Beacon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec3,
    pub battery_j: f64,
    pub mode: Mode,
    pub waypoint_index: usize,
    pub home: Point2,
    pub time_s: f64,
    /// Remaining hover time for a yaw turn at a corner.
    pub dwell_s: f64,
    pub alarm_raised: bool,
    pub crash_position: Option<Vec3>,
}

impl AgentState {
    pub fn on_ground(home: Point2, battery_j: f64) -> Self {
        Self {
            position: Vec3::new(home.x, home.y, 0.0),
            battery_j,
            mode: Mode::Idle,
            waypoint_index: 0,
            home,
            time_s: 0.0,
            dwell_s: 0.0,
            alarm_raised: false,
            crash_position: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    TakeoffComplete,
    LapComplete,
    LowBatteryAlarm,
    ReturnInitiated,
    LandedHome,
    CrashLanded,
    BeaconPing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissionEvent {
    pub time_s: f64,
    pub kind: EventKind,
    pub position: Vec3,
}

/// Flight altitude over a crop of the given height: the takeoff height, or
/// the clearance above the canopy when that is higher.
pub fn cruise_altitude(crop_height_m: f64) -> Result<f64> {
    if !(crop_height_m >= 0.0) {
        return Err(Error::config(
            "field.crop_height_m",
            format!("crop height must be non-negative, got {crop_height_m}"),
        ));
    }
    Ok(TAKEOFF_ALTITUDE_M.max(crop_height_m + CROP_CLEARANCE_M))
}

/// Advances the agent one step toward `target`: horizontally at cruise
/// speed, vertically at the climb rate, without overshooting. A pending yaw
/// dwell is served first by hovering in place.
pub fn step_agent(st: &AgentState, target: Vec3, p: &TricopterParams, dt_s: f64) -> AgentState {
    debug_assert!(dt_s > 0.0);
    debug_assert!(st.mode.is_airborne(), "step_agent in {:?}", st.mode);
    let mut next = st.clone();
    if st.dwell_s > 0.0 {
        next.dwell_s = (st.dwell_s - dt_s).max(0.0);
        next.battery_j = (st.battery_j - p.hover_power_w * dt_s).max(0.0);
        return next;
    }

    let here = st.position.xy();
    let to = target.xy();
    let horiz = here.distance(to);
    let reach = p.cruise_speed_mps * dt_s;
    let moved_horizontally = horiz > 0.0;
    if horiz <= reach {
        next.position.x = to.x;
        next.position.y = to.y;
    } else {
        let f = reach / horiz;
        next.position.x = here.x + (to.x - here.x) * f;
        next.position.y = here.y + (to.y - here.y) * f;
    }

    let dz = target.z - st.position.z;
    let climb = p.climb_rate_mps * dt_s;
    next.position.z = if dz.abs() <= climb {
        target.z
    } else {
        st.position.z + climb.copysign(dz)
    }
    .max(0.0);

    let power = if moved_horizontally {
        p.cruise_power_w
    } else {
        p.hover_power_w
    };
    next.battery_j = (st.battery_j - power * dt_s).max(0.0);

    if next.position.distance(target) <= ARRIVAL_TOLERANCE_M {
        next.waypoint_index += 1;
    }
    next
}

/// Applies the failsafe rules after a step and reports the events raised.
pub fn failsafe_check(st: &AgentState, p: &TricopterParams) -> (AgentState, Vec<MissionEvent>) {
    let mut next = st.clone();
    let mut events = Vec::new();
    let event = |kind, position| MissionEvent {
        time_s: st.time_s,
        kind,
        position,
    };
    match st.mode {
        Mode::Beacon => {
            let at = st.crash_position.expect("beacon without crash position");
            events.push(event(EventKind::BeaconPing, at));
        }
        Mode::Crashed => {
            let at = st.crash_position.expect("crash without crash position");
            next.mode = Mode::Beacon;
            events.push(event(EventKind::BeaconPing, at));
        }
        mode if mode.is_airborne() => {
            let at_home = st.position.xy().distance(st.home) <= LANDING_TOLERANCE_M;
            if mode == Mode::Return && at_home && st.position.z <= 1e-9 {
                next.position.z = 0.0;
                next.mode = Mode::Landed;
                events.push(event(EventKind::LandedHome, next.position));
            } else if st.battery_j <= 0.0 {
                let at = Vec3::new(st.position.x, st.position.y, 0.0);
                next.position = at;
                next.crash_position = Some(at);
                next.mode = Mode::Crashed;
                events.push(event(EventKind::CrashLanded, at));
            } else if mode == Mode::Cruise
                && !st.alarm_raised
                && st.battery_j / p.battery_capacity_j < p.low_battery_fraction
            {
                next.alarm_raised = true;
                next.mode = Mode::Return;
                next.dwell_s = 0.0;
                events.push(event(EventKind::LowBatteryAlarm, st.position));
                events.push(event(EventKind::ReturnInitiated, st.position));
            }
        }
        _ => {}
    }
    (next, events)
}

fn turn_angle_deg(a: Point2, b: Point2, c: Point2) -> f64 {
    let (ux, uy) = (b.x - a.x, b.y - a.y);
    let (vx, vy) = (c.x - b.x, c.y - b.y);
    let nu = ux.hypot(uy);
    let nv = vx.hypot(vy);
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    ((ux * vx + uy * vy) / (nu * nv)).clamp(-1.0, 1.0).acos().to_degrees()
}

/// One agent flying one mission: takeoff, altitude check, the waypoint
/// stream, then return and landing, with failsafes checked every step.
#[derive(Debug, Clone)]
pub struct Sortie {
    pub state: AgentState,
    waypoints: Vec<Point2>,
    lap_ends: Vec<usize>,
    next_lap: usize,
    cruise_alt: f64,
    params: TricopterParams,
    laps_completed: u32,
}

impl Sortie {
    pub fn new(home: Point2, plan: &PathPlan, cruise_alt: f64, params: TricopterParams) -> Self {
        Self {
            state: AgentState::on_ground(home, params.battery_capacity_j),
            waypoints: plan.waypoints.clone(),
            lap_ends: plan.lap_end_indices(),
            next_lap: 0,
            cruise_alt,
            params,
            laps_completed: 0,
        }
    }

    pub fn laps_completed(&self) -> u32 {
        self.laps_completed
    }

    pub fn energy_used_j(&self) -> f64 {
        self.params.battery_capacity_j - self.state.battery_j
    }

    pub fn is_done(&self) -> bool {
        self.state.mode.is_terminal()
    }

    /// Whether the payload is radiating: only while flying the path.
    pub fn is_emitting(&self) -> bool {
        self.state.mode == Mode::Cruise
    }

    /// Advances the mission by `dt_s` and returns the events raised.
    pub fn advance(&mut self, dt_s: f64) -> Vec<MissionEvent> {
        let mut events = Vec::new();
        if self.state.mode == Mode::Idle {
            self.state.mode = Mode::Takeoff;
        }
        let p = &self.params;
        let home = self.state.home;
        let st = &self.state;
        let mut next = match st.mode {
            Mode::Takeoff => {
                let target = Vec3::new(home.x, home.y, TAKEOFF_ALTITUDE_M);
                let mut n = step_agent(st, target, p, dt_s);
                if n.waypoint_index > st.waypoint_index {
                    n.waypoint_index = 0;
                    n.mode = Mode::AltitudeCheck;
                    events.push(MissionEvent {
                        time_s: st.time_s + dt_s,
                        kind: EventKind::TakeoffComplete,
                        position: n.position,
                    });
                }
                n
            }
            Mode::AltitudeCheck => {
                let target = Vec3::new(st.position.x, st.position.y, self.cruise_alt);
                let mut n = step_agent(st, target, p, dt_s);
                if n.waypoint_index > st.waypoint_index {
                    n.waypoint_index = 0;
                    n.mode = Mode::Cruise;
                }
                n
            }
            Mode::Cruise => {
                let idx = st.waypoint_index;
                let wp = self.waypoints[idx];
                let mut n = step_agent(st, Vec3::new(wp.x, wp.y, self.cruise_alt), p, dt_s);
                if n.waypoint_index > idx {
                    if self.lap_ends.get(self.next_lap) == Some(&idx) {
                        self.next_lap += 1;
                        self.laps_completed += 1;
                        events.push(MissionEvent {
                            time_s: st.time_s + dt_s,
                            kind: EventKind::LapComplete,
                            position: n.position,
                        });
                    }
                    match self.waypoints.get(idx + 1) {
                        Some(&next_wp) if idx > 0 => {
                            let angle = turn_angle_deg(self.waypoints[idx - 1], wp, next_wp);
                            n.dwell_s = angle / p.yaw_rate_dps;
                        }
                        Some(_) => {}
                        None => n.mode = Mode::Return,
                    }
                }
                n
            }
            Mode::Return => {
                let target = if st.position.xy().distance(home) > ARRIVAL_TOLERANCE_M {
                    Vec3::new(home.x, home.y, st.position.z)
                } else {
                    Vec3::new(home.x, home.y, 0.0)
                };
                step_agent(st, target, p, dt_s)
            }
            Mode::Idle | Mode::Landed | Mode::Crashed | Mode::Beacon => st.clone(),
        };
        next.time_s = st.time_s + dt_s;
        let (after, fs_events) = failsafe_check(&next, p);
        self.state = after;
        events.extend(fs_events);
        events
    }

    /// Flies until the agent is landed or beaconing, then keeps stepping for
    /// `linger_steps` more steps. Returns every event in order.
    pub fn fly_to_completion(&mut self, dt_s: f64, linger_steps: usize) -> Vec<MissionEvent> {
        let mut log = Vec::new();
        while !self.is_done() {
            log.extend(self.advance(dt_s));
        }
        for _ in 0..linger_steps {
            log.extend(self.advance(dt_s));
        }
        log
    }
}
