// SPDX-License-Identifier: Apache-2.0

//! Hand-built designs shared by the unit tests and the acceptance harness.
//! Each returns `(netlist, library, floorplan)` text.

#![allow(dead_code)]

use std::fmt::Write as _;

pub const LIB: &str = "MACRO RAM 50 50\nMACRO ROM 40 20\nSTDCELL INV 1\nSTDCELL DFF 1 FF\n";

/// Text builder for small hierarchical netlists.
#[derive(Default)]
pub struct NetlistBuilder {
    text: String,
    nets: usize,
}

impl NetlistBuilder {
    pub fn new(top: &str) -> Self {
        let mut b = NetlistBuilder::default();
        writeln!(b.text, "MODULE {top} PARENT -").unwrap();
        b
    }

    /// Declare `name` under `parent` holding `std` inverters chained by
    /// single-bit nets plus `macros` RAM macros hanging off the chain.
    pub fn module(&mut self, name: &str, parent: &str, std: usize, macros: usize) -> &mut Self {
        writeln!(self.text, "MODULE {name} PARENT {parent}").unwrap();
        self.cells(name, std, macros, "RAM");
        self
    }

    /// Add instances directly to an existing module.
    pub fn cells(&mut self, module: &str, std: usize, macros: usize, master: &str) -> &mut Self {
        let tag = short(module);
        for k in 0..std {
            writeln!(self.text, "INST {tag}_{k} INV {module}").unwrap();
        }
        for k in 0..macros {
            writeln!(self.text, "INST {tag}_{master}{k} {master} {module}").unwrap();
        }
        for k in 1..std {
            self.net(1, &format!("{tag}_{}.o", k - 1), &[&format!("{tag}_{k}.i")]);
        }
        for k in 0..macros {
            if std > 0 {
                let anchor = format!("{tag}_{}.o", k % std);
                self.net(8, &anchor, &[&format!("{tag}_{master}{k}.d")]);
            }
        }
        self
    }

    pub fn net(&mut self, width: u32, driver: &str, sinks: &[&str]) -> &mut Self {
        write!(self.text, "NET n{} WIDTH {width} {driver}", self.nets).unwrap();
        for s in sinks {
            write!(self.text, " {s}").unwrap();
        }
        self.text.push('\n');
        self.nets += 1;
        self
    }

    /// A `width`-bit bus from the first cell of `from` to the first cell of `to`.
    pub fn bus(&mut self, width: u32, from: &str, to: &str) -> &mut Self {
        let (a, b) = (format!("{}_0.o", short(from)), format!("{}_0.i", short(to)));
        self.net(width, &a, &[&b])
    }

    pub fn finish(&self) -> String {
        self.text.clone()
    }
}

fn short(module: &str) -> String {
    module.rsplit('/').next().unwrap_or(module).to_string()
}

pub fn canvas(w: f64, h: f64) -> String {
    format!(
        "CANVAS {w} {h}\nIOPIN in0 0 {}\nIOPIN out0 {w} {}\n",
        h / 2.0,
        h / 2.0
    )
}

/// Twelve-module hierarchy sized so that, with three levels and ratio 1.5,
/// one module is kept whole as a leaf, one flat module is split in two, and
/// two small siblings with matching connectivity are merged.
///
/// top -> A{D, E, L}, B{F, G}, C{H{J, K}, I}
pub fn hier_trace() -> (String, String, String) {
    let mut b = NetlistBuilder::new("top");
    b.module("top/A", "top", 0, 0)
        .module("top/A/D", "top/A", 200, 1)
        .module("top/A/E", "top/A", 120, 0)
        .module("top/A/L", "top/A", 130, 0)
        .module("top/B", "top", 0, 0)
        .module("top/B/F", "top/B", 320, 0)
        .module("top/B/G", "top/B", 150, 1)
        .module("top/C", "top", 20, 1)
        .module("top/C/H", "top/C", 10, 0)
        .module("top/C/H/J", "top/C/H", 15, 0)
        .module("top/C/H/K", "top/C/H", 15, 0)
        .module("top/C/I", "top/C", 20, 0);
    // E and L talk to F and C over wide buses; everything else is light.
    b.bus(64, "E", "F")
        .bus(64, "E", "C")
        .bus(64, "L", "F")
        .bus(60, "L", "C")
        .bus(16, "D", "E")
        .bus(16, "F", "G")
        .bus(4, "I", "J")
        .bus(4, "K", "C");
    (b.finish(), LIB.to_string(), canvas(1000.0, 1000.0))
}

/// Candidate-merge scenario: four small siblings S1..S4 under B/G.
///
/// top -> A, B{F, G{S1, S2, S3, S4}}, C
///
/// S1 only reaches F, S2 and S3 both reach A and C with similar buses, S4
/// reaches A and F.
pub fn signature_merge() -> (String, String, String) {
    let mut b = NetlistBuilder::new("top");
    b.module("top/A", "top", 40, 0)
        .module("top/B", "top", 0, 0)
        .module("top/B/F", "top/B", 40, 0)
        .module("top/B/G", "top/B", 0, 0)
        .module("top/B/G/S1", "top/B/G", 10, 0)
        .module("top/B/G/S2", "top/B/G", 10, 0)
        .module("top/B/G/S3", "top/B/G", 10, 0)
        .module("top/B/G/S4", "top/B/G", 10, 0)
        .module("top/C", "top", 40, 0);
    b.bus(64, "S1", "F")
        .bus(20, "S1", "A")
        .bus(64, "S2", "A")
        .bus(64, "S2", "C")
        .bus(70, "S3", "A")
        .bus(58, "S3", "C")
        .bus(64, "S4", "A")
        .bus(64, "S4", "F");
    (b.finish(), LIB.to_string(), canvas(1000.0, 1000.0))
}
