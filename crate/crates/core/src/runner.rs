//! Builds a world from a scenario, drives one run, and summarizes it.
//!
//! Runs are shared-nothing: everything lives in the engine and the world,
//! both constructed here from (scenario, seed). Arrival streams are keyed
//! by node and class only, so different protocols under equal seeds see
//! identical traffic.

use crate::engine::{Engine, World};
use crate::event::{Event, RunTrace};
use crate::mac::csma::{CsmaMode, CsmaWorld};
use crate::mac::idsme::IdsmeWorld;
use crate::medium::Medium;
use crate::metrics::Metrics;
use crate::monitor::{MonitorReport, Probe};
use crate::packet::Priority;
use crate::scenario::{Protocol, Scenario};
use crate::traffic::generate_arrivals;

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub record_trace: bool,
    pub probing: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassSummary {
    pub generated: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
    pub delivered_units: u64,
    pub avg_delay_s: Option<f64>,
    pub throughput_units_per_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub digest: u64,
    pub processed: u64,
    pub classes: [ClassSummary; 2],
    pub monitor: MonitorReport,
    /// generated == delivered + dropped + in-flight held, per class, with
    /// the in-flight side counted by scanning node queues independently of
    /// the metric counters.
    pub conservation_ok: bool,
}

impl RunSummary {
    pub fn class(&self, class: Priority) -> &ClassSummary {
        &self.classes[class.index()]
    }
}

pub struct RunOutput {
    pub summary: RunSummary,
    pub trace: RunTrace,
    pub probes: Vec<Probe>,
}

enum Built {
    Csma(Box<CsmaWorld>),
    Dsme(Box<IdsmeWorld>),
}

impl World for Built {
    fn handle(&mut self, engine: &mut Engine, event: Event) {
        match self {
            Built::Csma(w) => w.handle(engine, event),
            Built::Dsme(w) => w.handle(engine, event),
        }
    }
}

/// Execute one simulation run for `(scenario, seed)`.
pub fn run_scenario(sc: &Scenario, seed: u64, opts: &RunOptions) -> RunOutput {
    sc.validate().expect("scenario validated before running");
    let mut engine = Engine::new(seed);
    let medium = Medium::new(sc.medium_config(), sc.positions());

    let mut world = match sc.protocol {
        Protocol::Frog => Built::Csma(Box::new(CsmaWorld::new(
            CsmaMode::Frog(sc.frog_config()),
            medium,
            sc.sources,
            sc.traffic.normal_units,
            sc.traffic.urgent_units,
            opts.probing,
        ))),
        Protocol::Dyfrag => Built::Csma(Box::new(CsmaWorld::new(
            CsmaMode::DyFrag(sc.dyfrag_config()),
            medium,
            sc.sources,
            sc.traffic.normal_units,
            sc.traffic.urgent_units,
            opts.probing,
        ))),
        Protocol::Idsme => Built::Dsme(Box::new(IdsmeWorld::new(
            sc.idsme,
            medium,
            sc.sources,
            opts.probing,
        ))),
    };

    // Pre-draw every arrival so traffic depends only on (seed, node, class).
    for node in 1..=sc.sources {
        for class in Priority::ALL {
            for packet in generate_arrivals(
                crate::packet::NodeId(node),
                class,
                &sc.traffic,
                sc.horizon,
                &mut engine.rng,
            ) {
                match &world {
                    Built::Csma(w) => w.inject_packet(&mut engine, packet),
                    Built::Dsme(w) => w.inject_packet(&mut engine, packet),
                }
            }
        }
    }

    match &mut world {
        Built::Csma(w) => {
            w.record_trace = opts.record_trace;
            w.start(&mut engine);
        }
        Built::Dsme(w) => {
            w.record_trace = opts.record_trace;
            w.start(&mut engine);
        }
    }

    let report = engine.run_until(&mut world, sc.horizon);

    let (metrics, monitor_report, scan, records, probes) = match world {
        Built::Csma(mut w) => {
            let scan = w.in_flight_scan();
            let probes = w.monitor.take_probes();
            (w.metrics, w.monitor.report(), scan, w.records, probes)
        }
        Built::Dsme(mut w) => {
            let scan = w.in_flight_scan();
            let probes = w.monitor.take_probes();
            (w.metrics, w.monitor.report(), scan, w.records, probes)
        }
    };

    let summary = summarize(
        sc,
        seed,
        report.digest,
        report.processed,
        &metrics,
        monitor_report,
        scan,
    );
    RunOutput {
        summary,
        trace: RunTrace {
            digest: report.digest,
            processed: report.processed,
            records,
        },
        probes,
    }
}

fn summarize(
    sc: &Scenario,
    seed: u64,
    digest: u64,
    processed: u64,
    metrics: &Metrics,
    monitor: MonitorReport,
    scan: [u64; 2],
) -> RunSummary {
    let mut classes = [ClassSummary {
        generated: 0,
        delivered: 0,
        dropped: 0,
        in_flight: 0,
        delivered_units: 0,
        avg_delay_s: None,
        throughput_units_per_s: 0.0,
    }; 2];
    let mut conservation_ok = true;
    for class in Priority::ALL {
        let rec = metrics.class(class);
        let in_flight = scan[class.index()];
        conservation_ok &= rec.generated == rec.delivered + rec.dropped + in_flight;
        classes[class.index()] = ClassSummary {
            generated: rec.generated,
            delivered: rec.delivered,
            dropped: rec.dropped,
            in_flight,
            delivered_units: rec.delivered_units,
            avg_delay_s: rec.avg_delay_s(),
            throughput_units_per_s: rec.throughput_units_per_s(sc.horizon),
        };
    }
    RunSummary {
        seed,
        digest,
        processed,
        classes,
        monitor,
        conservation_ok,
    }
}
