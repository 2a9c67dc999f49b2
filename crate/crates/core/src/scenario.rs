//! Scenario files: one `key = value` per line, `#` comments.
//!
//! ```text
//! topology = rectangular     # or hexagonal
//! cols = 5
//! rows = 5
//! dx_mm = 35
//! plan = ../plans/njit.plan  # relative to this file
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::lattice::LatticeSpec;
use crate::plan::{ActionPlan, PlanError};
use crate::protocol::DistanceFilter;
use crate::sim::{NoiseModel, SimConfig, StopAt};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("missing key `{0}`")]
    Missing(&'static str),
    #[error("in {path}")]
    Plan {
        path: PathBuf,
        #[source]
        source: PlanError,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub lattice: LatticeSpec,
    pub sim: SimConfig,
    pub noise: NoiseModel,
    pub plan: Option<PathBuf>,
}

impl FromStr for StopAt {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["r1"] => Ok(StopAt::R1),
            ["r2"] => Ok(StopAt::R2),
            ["time"] => Ok(StopAt::TimeLimit),
            ["steps", n] => n.parse().map(StopAt::Steps).map_err(|e| format!("steps: {e}")),
            _ => Err(format!("unknown stop `{s}` (r1, r2, steps N, time)")),
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_owned(), source })?;
        Scenario::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses scenario text; relative plan paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Scenario, ScenarioError> {
        let mut sim = SimConfig::default();
        // biased agents only exist once bias_frac > 0
        let mut noise = NoiseModel { biased_agent_mm: 15.0, biased_apart: true, ..Default::default() };
        let mut plan = None;
        let mut topology = String::from("rectangular");
        let (mut cols, mut rows, mut row_list) = (None, None, None);
        let (mut dx, mut dy, mut eps) = (35.0, None, 0.0);

        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ScenarioError::Line { line: line_no, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            macro_rules! num {
                () => {
                    value.parse().map_err(|e| err(format!("{key}: {e}")))?
                };
            }
            let t = &mut sim.protocol.timers;
            match key {
                "topology" => topology = value.to_owned(),
                "cols" => cols = Some(num!()),
                "rows" => rows = Some(num!()),
                "row_list" => {
                    let list: Result<Vec<u16>, _> = value.split(',').map(|v| v.trim().parse()).collect();
                    row_list = Some(list.map_err(|e| err(format!("row_list: {e}")))?);
                }
                "dx_mm" => dx = num!(),
                "dy_mm" => dy = Some(num!()),
                "jitter_eps" => eps = num!(),
                "seed" => sim.seed = num!(),
                "comm_range_mm" => sim.comm_range_mm = num!(),
                "msg_rate_hz" => sim.msg_rate_hz = num!(),
                "tick_rate_hz" => sim.tick_rate_hz = num!(),
                "max_sim_seconds" => sim.max_sim_seconds = num!(),
                "stop" => sim.stop = value.parse().map_err(err)?,
                "frames_every" => sim.frames_every = Some(num!()),
                "drop_prob" => noise.drop_prob = num!(),
                "sigma_mm" => noise.dist_noise_sigma = num!(),
                "bias_mm" => noise.dist_noise_bias = num!(),
                "skew" => noise.clock_skew_frac = num!(),
                "bias_frac" => noise.biased_agent_frac = num!(),
                "bias_agent_mm" => noise.biased_agent_mm = num!(),
                "biased_apart" => noise.biased_apart = num!(),
                "plan" => plan = Some(base.join(value)),
                "t1" => t.t1 = num!(),
                "t2" => t.t2 = num!(),
                "t3" => t.t3 = num!(),
                "t4" => t.t4 = num!(),
                "repair_delay" => t.repair_delay = num!(),
                "repair" => sim.protocol.repair = num!(),
                "depart_delay" => sim.protocol.depart_delay = num!(),
                "distance_filter" => {
                    sim.protocol.distance_filter =
                        value.parse::<DistanceFilter>().map_err(|_| err(format!("unknown distance filter `{value}`")))?
                }
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }

        let mut lattice = match topology.as_str() {
            "rectangular" => LatticeSpec::rectangular(
                cols.ok_or(ScenarioError::Missing("cols"))?,
                rows.ok_or(ScenarioError::Missing("rows"))?,
                dx,
                dy.unwrap_or(dx),
            ),
            "hexagonal" => LatticeSpec::hexagonal(row_list.ok_or(ScenarioError::Missing("row_list"))?, dx),
            other => {
                return Err(ScenarioError::Line { line: 0, message: format!("unknown topology `{other}`") });
            }
        };
        lattice.jitter_eps = eps;
        Ok(Scenario { lattice, sim, noise, plan })
    }

    /// The scenario's plan, or an empty plan when none is given.
    pub fn load_plan(&self) -> Result<ActionPlan, ScenarioError> {
        match &self.plan {
            None => Ok(ActionPlan::default()),
            Some(path) => load_plan(path),
        }
    }
}

pub fn load_plan(path: &Path) -> Result<ActionPlan, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_owned(), source })?;
    ActionPlan::parse(&text).map_err(|source| ScenarioError::Plan { path: path.to_owned(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Topology;

    #[test]
    fn parses_a_full_scenario() {
        let s = Scenario::parse(
            "# noisy\ncols = 25\nrows = 8\ndx_mm = 35\ndrop_prob = 0.1 # lossy\nskew = 0.01\nt1 = 320\nstop = steps 3\nplan = p/swarm.plan\n",
            Path::new("/x"),
        )
        .unwrap();
        assert_eq!(s.lattice.topology, Topology::Rectangular { cols: 25, rows: 8 });
        assert_eq!(s.lattice.dy_mm, 35.0);
        assert_eq!(s.noise.drop_prob, 0.1);
        assert_eq!(s.sim.protocol.timers.t1, 320);
        assert_eq!(s.sim.stop, StopAt::Steps(3));
        assert_eq!(s.plan.as_deref(), Some(Path::new("/x/p/swarm.plan")));
    }

    #[test]
    fn hexagonal_rows() {
        let s = Scenario::parse("topology = hexagonal\nrow_list = 4, 3, 4\ndx_mm = 50\n", Path::new(".")).unwrap();
        assert_eq!(s.lattice.topology, Topology::Hexagonal { row_lengths: vec![4, 3, 4] });
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = Scenario::parse("cols = 5\n\nrows = five\n", Path::new(".")).unwrap_err();
        assert!(matches!(e, ScenarioError::Line { line: 3, .. }), "{e}");
        let e = Scenario::parse("cols = 5\nspeed = 3\n", Path::new(".")).unwrap_err();
        assert!(e.to_string().contains("unknown key"));
        assert!(matches!(Scenario::parse("cols = 5\n", Path::new(".")), Err(ScenarioError::Missing("rows"))));
    }
}
