//! Ladder netlist, companion-model stamping and the backward-Euler step.
//!
//! Topology (half-wave Villard cascade, N stages):
//!
//! ```text
//!   source ──C── 1 ──C── 3 ──C── 5 ... (2N-1)        AC column
//!              ╱ D1  ╱ D2 ...                ╲ D2N
//!   ground ──C── 2 ──C── 4 ... (2N-2) ──C── 2N ──R_load── ground
//! ```
//!
//! Diode k points from node k-1 (anode) to node k (cathode), with node 0 the
//! ground reference, so the chain conducts charge from ground up to the
//! output node 2N. Capacitors carry an ESR in series; diodes are
//! piecewise-linear (Vf, Ron, Goff).
//!
//! Node voltages of the ladder nodes 1..2N are the unknowns. The driven
//! source node has a known voltage and is eliminated by substitution: its
//! conductance terms move to the right-hand side.

use std::collections::HashMap;
use std::f64::consts::TAU;

use crate::circuit::solver::{factor, LuFactors};
use crate::circuit::CaseParams;
use crate::error::{Error, Result};

/// Terminal of a branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRef {
    /// The 0 V reference.
    Ground,
    /// The driven AC input node; voltage known at every instant.
    Source,
    /// Ladder node `k` (1-based) is `Node(k - 1)`.
    Node(usize),
}

/// Series capacitor + ESR branch with its stored capacitor voltage.
///
/// Branch current is positive from `a` to `b`. Under backward Euler the
/// branch becomes a Norton pair: `R_eq = esr + dt/C` and a source tracking
/// the stored voltage, so `i = (v_a - v_b - v_state) / R_eq`.
#[derive(Debug, Clone)]
pub struct CapBranch {
    pub a: NodeRef,
    pub b: NodeRef,
    pub cap: f64,
    pub esr: f64,
    /// Voltage across the ideal capacitor element (excludes the ESR drop).
    pub v_state: f64,
    /// Branch current of the most recent accepted step.
    pub last_current: f64,
}

impl CapBranch {
    pub fn new(a: NodeRef, b: NodeRef, cap: f64, esr: f64) -> Self {
        Self { a, b, cap, esr, v_state: 0.0, last_current: 0.0 }
    }
}

/// Piecewise-linear diode branch: conducting it is `Ron` in series with a
/// `Vf` offset, blocking it is a plain off-conductance `Goff`.
#[derive(Debug, Clone)]
pub struct DiodeBranch {
    pub anode: NodeRef,
    pub cathode: NodeRef,
    pub vf: f64,
    pub ron: f64,
    pub goff: f64,
    pub on: bool,
}

/// Assembled multiplier circuit plus the mutable integration state.
#[derive(Debug, Clone)]
pub struct Netlist {
    /// Count of non-ground nodes (ladder nodes plus the source node).
    pub node_count: usize,
    /// Count of unknown node voltages (ladder nodes only).
    pub unknowns: usize,
    pub cap_branches: Vec<CapBranch>,
    pub diode_branches: Vec<DiodeBranch>,
    /// Load resistance from `load_node` to ground.
    pub load_node: NodeRef,
    pub r_load: f64,
    /// Source waveform `v(t) = vin_peak * sin(2*pi*freq*t)`.
    pub vin_peak: f64,
    pub freq: f64,
    /// Diode-state sweeps allowed per step before accepting the last state.
    pub max_diode_iters: usize,
    /// False if the most recent step exhausted `max_diode_iters` without a
    /// self-consistent diode state.
    pub last_step_diode_converged: bool,

    solution: Vec<f64>,
    last_v_src: f64,
    last_dt: f64,
    lu_cache: HashMap<u64, LuFactors>,
}

/// Build the cascade netlist for one parameter point. All capacitors start
/// at 0 V and all diodes start blocking.
pub fn build_netlist(params: &CaseParams) -> Result<Netlist> {
    params.validate()?;
    let n = params.n_stages as usize;
    let unknowns = 2 * n;
    let node = |k: usize| -> NodeRef {
        // Ladder node k, 1-based; node 0 is ground.
        if k == 0 {
            NodeRef::Ground
        } else {
            NodeRef::Node(k - 1)
        }
    };

    let mut cap_branches = Vec::with_capacity(2 * n);
    // AC column: source -> 1, then 1 -> 3, ..., (2N-3) -> (2N-1).
    cap_branches.push(CapBranch::new(NodeRef::Source, node(1), params.cap, params.esr));
    for i in 1..n {
        cap_branches.push(CapBranch::new(
            node(2 * i - 1),
            node(2 * i + 1),
            params.cap,
            params.esr,
        ));
    }
    // DC column: ground -> 2, 2 -> 4, ..., (2N-2) -> 2N.
    for i in 1..=n {
        cap_branches.push(CapBranch::new(
            node(2 * i - 2),
            node(2 * i),
            params.cap,
            params.esr,
        ));
    }

    let diode_branches = (1..=2 * n)
        .map(|k| DiodeBranch {
            anode: node(k - 1),
            cathode: node(k),
            vf: params.diode_vf,
            ron: params.diode_ron,
            goff: params.diode_goff,
            on: false,
        })
        .collect();

    Ok(Netlist {
        node_count: unknowns + 1,
        unknowns,
        cap_branches,
        diode_branches,
        load_node: node(2 * n),
        r_load: params.r_load,
        vin_peak: params.vin_peak,
        freq: params.freq,
        max_diode_iters: 50,
        last_step_diode_converged: true,
        solution: vec![0.0; unknowns],
        last_v_src: 0.0,
        last_dt: 0.0,
        lu_cache: HashMap::new(),
    })
}

impl Netlist {
    /// Source voltage at time `t`.
    pub fn source_voltage(&self, t: f64) -> f64 {
        self.vin_peak * (TAU * self.freq * t).sin()
    }

    /// Voltage of any terminal at the last accepted step.
    pub fn node_voltage(&self, r: NodeRef) -> f64 {
        match r {
            NodeRef::Ground => 0.0,
            NodeRef::Source => self.last_v_src,
            NodeRef::Node(i) => self.solution[i],
        }
    }

    /// Current through diode `idx` (anode to cathode) at the last step.
    pub fn diode_current(&self, idx: usize) -> f64 {
        let d = &self.diode_branches[idx];
        let v_ac = self.node_voltage(d.anode) - self.node_voltage(d.cathode);
        if d.on {
            (v_ac - d.vf) / d.ron
        } else {
            d.goff * v_ac
        }
    }

    /// Load current at the last step.
    pub fn load_current(&self) -> f64 {
        self.node_voltage(self.load_node) / self.r_load
    }

    fn conductance_of(branch_esr: f64, cap: f64, dt: f64) -> f64 {
        1.0 / (branch_esr + dt / cap)
    }

    fn diode_state_mask(&self) -> u64 {
        let mut mask = 0u64;
        for (i, d) in self.diode_branches.iter().enumerate() {
            if d.on {
                mask |= 1 << i;
            }
        }
        mask
    }

    /// Assemble the reduced conductance matrix for the current diode states.
    fn assemble_matrix(&self, dt: f64) -> Vec<f64> {
        let n = self.unknowns;
        let mut a = vec![0.0; n * n];
        let mut stamp = |p: NodeRef, q: NodeRef, g: f64| {
            if let NodeRef::Node(i) = p {
                a[i * n + i] += g;
                if let NodeRef::Node(j) = q {
                    a[i * n + j] -= g;
                }
            }
            if let NodeRef::Node(i) = q {
                a[i * n + i] += g;
                if let NodeRef::Node(j) = p {
                    a[i * n + j] -= g;
                }
            }
        };
        for c in &self.cap_branches {
            stamp(c.a, c.b, Self::conductance_of(c.esr, c.cap, dt));
        }
        for d in &self.diode_branches {
            let g = if d.on { 1.0 / d.ron } else { d.goff };
            stamp(d.anode, d.cathode, g);
        }
        stamp(self.load_node, NodeRef::Ground, 1.0 / self.r_load);
        a
    }

    /// Assemble the right-hand side: Norton history sources plus the known
    /// source-node voltage terms.
    fn assemble_rhs(&self, dt: f64, v_src: f64) -> Vec<f64> {
        let n = self.unknowns;
        let mut b = vec![0.0; n];
        // Norton branch (p -> q) with conductance g and source term j such
        // that i(p->q) = g*(v_p - v_q) + j.
        let mut stamp = |p: NodeRef, q: NodeRef, g: f64, j: f64| {
            if let NodeRef::Node(i) = p {
                b[i] -= j;
                if q == NodeRef::Source {
                    b[i] += g * v_src;
                }
            }
            if let NodeRef::Node(i) = q {
                b[i] += j;
                if p == NodeRef::Source {
                    b[i] += g * v_src;
                }
            }
        };
        for c in &self.cap_branches {
            let g = Self::conductance_of(c.esr, c.cap, dt);
            stamp(c.a, c.b, g, -g * c.v_state);
        }
        for d in &self.diode_branches {
            if d.on {
                stamp(d.anode, d.cathode, 1.0 / d.ron, -d.vf / d.ron);
            } else {
                stamp(d.anode, d.cathode, d.goff, 0.0);
            }
        }
        stamp(self.load_node, NodeRef::Ground, 1.0 / self.r_load, 0.0);
        b
    }

    fn solve_current_states(&mut self, dt: f64, v_src: f64) -> Result<Vec<f64>> {
        let mask = self.diode_state_mask();
        if !self.lu_cache.contains_key(&mask) {
            // Chatter between many state patterns would otherwise grow the
            // cache without bound.
            if self.lu_cache.len() >= 256 {
                self.lu_cache.clear();
            }
            let lu = factor(self.assemble_matrix(dt), self.unknowns)?;
            self.lu_cache.insert(mask, lu);
        }
        let mut rhs = self.assemble_rhs(dt, v_src);
        self.lu_cache[&mask].solve_in_place(&mut rhs);
        Ok(rhs)
    }

    /// Advance the circuit one backward-Euler step from `t` to `t + dt`.
    ///
    /// Diode on/off states are found by a synchronous fixed-point sweep,
    /// warm-started from the previous step. The accepted solution satisfies
    /// the piecewise-linear consistency conditions (conducting diodes carry
    /// non-negative current, blocking diodes sit below their forward drop)
    /// unless `max_diode_iters` is exhausted, in which case the last state
    /// is kept and `last_step_diode_converged` is cleared.
    pub fn step(&mut self, t: f64, dt: f64) -> Result<Vec<f64>> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be > 0 s, got {dt}")));
        }
        if dt != self.last_dt {
            self.lu_cache.clear();
            self.last_dt = dt;
        }
        let v_src = self.source_voltage(t + dt);

        let mut consistent = false;
        let mut x = Vec::new();
        for _sweep in 0..self.max_diode_iters.max(1) {
            x = self.solve_current_states(dt, v_src)?;
            let mut changed = false;
            for i in 0..self.diode_branches.len() {
                let d = &self.diode_branches[i];
                let v_a = match d.anode {
                    NodeRef::Ground => 0.0,
                    NodeRef::Source => v_src,
                    NodeRef::Node(k) => x[k],
                };
                let v_c = match d.cathode {
                    NodeRef::Ground => 0.0,
                    NodeRef::Source => v_src,
                    NodeRef::Node(k) => x[k],
                };
                // ON is consistent iff current >= 0, i.e. v_ac >= vf; OFF is
                // consistent iff v_ac < vf. One predicate serves both.
                let want_on = v_a - v_c >= d.vf;
                if want_on != d.on {
                    self.diode_branches[i].on = want_on;
                    changed = true;
                }
            }
            if !changed {
                consistent = true;
                break;
            }
        }
        if !consistent {
            // Keep the states of the last sweep; resolve once so the
            // solution matches the kept states.
            x = self.solve_current_states(dt, v_src)?;
        }
        self.last_step_diode_converged = consistent;

        // Advance capacitor states with the accepted node voltages.
        for c in &mut self.cap_branches {
            let v_a = match c.a {
                NodeRef::Ground => 0.0,
                NodeRef::Source => v_src,
                NodeRef::Node(k) => x[k],
            };
            let v_b = match c.b {
                NodeRef::Ground => 0.0,
                NodeRef::Source => v_src,
                NodeRef::Node(k) => x[k],
            };
            let g = Self::conductance_of(c.esr, c.cap, dt);
            let i = g * (v_a - v_b - c.v_state);
            c.last_current = i;
            c.v_state += dt / c.cap * i;
        }

        self.last_v_src = v_src;
        self.solution = x.clone();
        Ok(x)
    }
}
