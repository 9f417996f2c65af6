//! Closed-loop execution of one job on the simulated GPU.
//!
//! The GPU is always saturated: a batch (or, per instance, a request) is
//! issued the moment the previous one completes. Latency samples feed the
//! controller's window and one decision is taken per full window.

use rand_chacha::ChaCha8Rng;

use crate::baseline::ClipperState;
use crate::domain::{percentile, Knob, KnobKind, LatencyWindow, MetricsRecord, SLO_QUANTILE};
use crate::perfmodel::{batch_latency, mt_latency, GpuModel};
use crate::scaler::{BatchScalerState, MtAction, MtScalerState};

/// A running controller plus the window it decides on.
#[derive(Debug, Clone)]
pub(crate) enum Controller {
    Batch(BatchScalerState),
    Mt(MtScalerState),
    Clipper(ClipperState),
    Static { knob: Knob, window: LatencyWindow },
}

impl Controller {
    pub(crate) fn knob(&self) -> Knob {
        match self {
            Controller::Batch(s) => Knob::batching(s.current_bs),
            Controller::Mt(s) => Knob::multi_tenancy(s.mtl),
            Controller::Clipper(s) => Knob::batching(s.current_bs),
            Controller::Static { knob, .. } => *knob,
        }
    }

    fn window_mut(&mut self) -> &mut LatencyWindow {
        match self {
            Controller::Batch(s) => &mut s.window,
            Controller::Mt(s) => &mut s.window,
            Controller::Clipper(s) => &mut s.window,
            Controller::Static { window, .. } => window,
        }
    }

    /// Decides on a full window; returns the new knob if it changed.
    fn decide(&mut self, p95: f64, slo: f64, alpha: f64) -> Option<Knob> {
        match self {
            Controller::Batch(s) => s.step(p95, slo, alpha).map(Knob::batching),
            Controller::Mt(s) => match s.step(p95, slo, alpha) {
                MtAction::Hold => None,
                MtAction::Add | MtAction::RemoveLast => Some(Knob::multi_tenancy(s.mtl)),
            },
            Controller::Clipper(s) => s.step(p95, slo).map(Knob::batching),
            Controller::Static { window, .. } => {
                window.clear();
                None
            }
        }
    }

    fn on_slo_change(&mut self) {
        match self {
            Controller::Batch(s) => s.on_slo_change(),
            Controller::Mt(s) => s.on_slo_change(),
            Controller::Clipper(_) | Controller::Static { .. } => {}
        }
    }

    pub(crate) fn infeasible(&self) -> bool {
        match self {
            Controller::Batch(s) => s.infeasible,
            Controller::Mt(s) => s.infeasible,
            Controller::Clipper(_) | Controller::Static { .. } => false,
        }
    }
}

/// Raw outcome of a closed-loop run, before summarising.
#[derive(Debug, Clone)]
pub(crate) struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub completed: u64,
    pub elapsed_ms: f64,
    pub energy_wms: f64,
    /// `(latency ms, items)` for every item completed under control.
    pub latencies: Vec<(f64, u32)>,
    /// Index into `records` of the first period after each SLO step.
    pub slo_step_records: Vec<usize>,
    /// Index of every record whose decision changed the knob.
    pub change_records: Vec<usize>,
    pub infeasible: bool,
}

pub(crate) struct Engine<'a> {
    model: GpuModel,
    rng: ChaCha8Rng,
    alpha: f64,
    job_id: u32,
    end_ms: f64,
    now_ms: f64,
    slo: f64,
    schedule: &'a [(f64, f64)],
    next_step: usize,
    completed: u64,
    energy_wms: f64,
    period_start_ms: f64,
    period_items: u64,
    period_within: u64,
    period_energy: f64,
    latencies: Vec<(f64, u32)>,
    records: Vec<MetricsRecord>,
    slo_step_records: Vec<usize>,
    change_records: Vec<usize>,
}

/// Instance of the DNN serving requests one at a time.
#[derive(Debug, Clone, Copy)]
struct Instance {
    busy_until: f64,
    latency: f64,
    epoch: u64,
    retiring: bool,
}

impl<'a> Engine<'a> {
    pub(crate) fn new(
        model: GpuModel,
        rng: ChaCha8Rng,
        alpha: f64,
        job_id: u32,
        duration_s: f64,
        slo: f64,
        schedule: &'a [(f64, f64)],
    ) -> Self {
        Engine {
            model,
            rng,
            alpha,
            job_id,
            end_ms: duration_s * 1000.0,
            now_ms: 0.0,
            slo,
            schedule,
            next_step: 0,
            completed: 0,
            energy_wms: 0.0,
            period_start_ms: 0.0,
            period_items: 0,
            period_within: 0,
            period_energy: 0.0,
            latencies: Vec::new(),
            records: Vec::new(),
            slo_step_records: Vec::new(),
            change_records: Vec::new(),
        }
    }

    pub(crate) fn now_ms(&self) -> f64 {
        self.now_ms
    }

    pub(crate) fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Charges a phase outside closed-loop control (profiling, deployment).
    /// Returns false when the job ran out of time.
    pub(crate) fn charge(&mut self, duration_ms: f64, items: u64, power_w: f64) -> bool {
        let dt = duration_ms.min(self.end_ms - self.now_ms).max(0.0);
        let full = dt >= duration_ms;
        let items = if full { items } else { 0 };
        self.now_ms += dt;
        self.energy_wms += power_w * dt;
        self.completed += items;
        self.period_start_ms = self.now_ms;
        full
    }

    fn advance_to(&mut self, t_ms: f64, serving: Knob) {
        let dt = t_ms - self.now_ms;
        if dt > 0.0 {
            let e = self.model.knob_power(serving) * dt;
            self.energy_wms += e;
            self.period_energy += e;
            self.now_ms = t_ms;
        }
    }

    fn complete(&mut self, latency: f64, items: u32) {
        self.completed += items as u64;
        self.period_items += items as u64;
        if latency <= self.slo {
            self.period_within += items as u64;
        }
        self.latencies.push((latency, items));
    }

    fn apply_schedule(&mut self, controller: &mut Controller) {
        while let Some(&(t_s, slo)) = self.schedule.get(self.next_step) {
            if t_s * 1000.0 > self.now_ms {
                break;
            }
            if slo != self.slo {
                self.slo = slo;
                controller.on_slo_change();
            }
            self.slo_step_records.push(self.records.len());
            self.next_step += 1;
        }
    }

    /// Closes the current period into a record using the window statistics.
    fn close_period(&mut self, knob: Knob, window: &LatencyWindow) {
        let samples: Vec<f64> = window.samples().collect();
        let Ok(p95) = percentile(&samples, SLO_QUANTILE) else {
            return;
        };
        let period_ms = self.now_ms - self.period_start_ms;
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let (throughput, power) = if period_ms > 0.0 {
            (
                self.period_items as f64 * 1000.0 / period_ms,
                self.period_energy / period_ms,
            )
        } else {
            (0.0, self.model.knob_power(knob))
        };
        self.records.push(MetricsRecord {
            time: self.now_ms / 1000.0,
            job_id: self.job_id,
            knob,
            p95,
            mean_latency: mean,
            throughput,
            power,
            slo: self.slo,
            violated: p95 > self.slo,
            period: period_ms / 1000.0,
            items: self.period_items,
            within_slo: self.period_within,
        });
        self.period_start_ms = self.now_ms;
        self.period_items = 0;
        self.period_within = 0;
        self.period_energy = 0.0;
    }

    /// Runs one decision if the window is full. Returns the new knob if the
    /// controller changed it.
    fn maybe_decide(&mut self, controller: &mut Controller) -> Option<Knob> {
        if !controller.window_mut().is_full() {
            return None;
        }
        let knob = controller.knob();
        let window = controller.window_mut().clone();
        self.close_period(knob, &window);
        let p95 = window.percentile(SLO_QUANTILE).expect("full window");
        let change = controller.decide(p95, self.slo, self.alpha);
        // Every decision starts a fresh window.
        controller.window_mut().clear();
        if change.is_some() {
            self.change_records.push(self.records.len() - 1);
        }
        change
    }

    /// Single instance running batches back to back.
    pub(crate) fn run_batching(&mut self, controller: &mut Controller) {
        loop {
            let knob = controller.knob();
            debug_assert_eq!(knob.kind, KnobKind::Batching);
            let latency = batch_latency(&self.model.batching, knob.value, &mut self.rng);
            let done = self.now_ms + latency;
            if done > self.end_ms {
                self.advance_to(self.end_ms, knob);
                break;
            }
            self.advance_to(done, knob);
            self.complete(latency, knob.value);
            controller.window_mut().push(latency);
            self.apply_schedule(controller);
            self.maybe_decide(controller);
        }
    }

    /// `initial` instances serving at BS=1; `target` (if different) is
    /// reached after `deploy_delay_ms`, during which `initial` keep serving.
    pub(crate) fn run_multi_tenancy(
        &mut self,
        controller: &mut Controller,
        initial: u32,
        deploy_delay_ms: f64,
    ) {
        let target = controller.knob().value;
        let mut active = initial;
        let mut epoch = 0u64;
        let mut instances: Vec<Instance> = Vec::with_capacity(initial.max(target) as usize);
        for _ in 0..initial {
            let latency = mt_latency(&self.model.mt, active, &mut self.rng);
            instances.push(Instance {
                busy_until: self.now_ms + latency,
                latency,
                epoch,
                retiring: false,
            });
        }
        let mut pending: Option<(f64, u32)> =
            (target != initial).then_some((self.now_ms + deploy_delay_ms, target));
        let mut accepting = pending.is_none();

        loop {
            let serving = Knob::multi_tenancy(instances.len() as u32);
            let (idx, t_inst) = instances
                .iter()
                .enumerate()
                .map(|(i, s)| (i, s.busy_until))
                .fold((usize::MAX, f64::INFINITY), |best, cur| {
                    if cur.1 < best.1 {
                        cur
                    } else {
                        best
                    }
                });

            if let Some((t_apply, new_active)) = pending {
                if t_apply <= t_inst {
                    if t_apply > self.end_ms {
                        self.advance_to(self.end_ms, serving);
                        break;
                    }
                    self.advance_to(t_apply, serving);
                    epoch += 1;
                    if new_active > active {
                        for _ in active..new_active {
                            let latency = mt_latency(&self.model.mt, new_active, &mut self.rng);
                            instances.push(Instance {
                                busy_until: self.now_ms + latency,
                                latency,
                                epoch,
                                retiring: false,
                            });
                        }
                    } else {
                        // Most recently added first; they finish in-flight work.
                        let mut to_retire = active - new_active;
                        for inst in instances.iter_mut().rev() {
                            if to_retire == 0 {
                                break;
                            }
                            if !inst.retiring {
                                inst.retiring = true;
                                to_retire -= 1;
                            }
                        }
                    }
                    active = new_active;
                    pending = None;
                    accepting = true;
                    continue;
                }
            }

            if idx == usize::MAX || t_inst > self.end_ms {
                self.advance_to(self.end_ms, serving);
                break;
            }
            self.advance_to(t_inst, serving);
            let done = instances[idx];
            self.complete(done.latency, 1);
            if accepting && done.epoch == epoch {
                controller.window_mut().push(done.latency);
            }
            if done.retiring {
                instances.remove(idx);
            } else {
                let latency = mt_latency(&self.model.mt, active, &mut self.rng);
                instances[idx] = Instance {
                    busy_until: self.now_ms + latency,
                    latency,
                    epoch,
                    retiring: false,
                };
            }
            self.apply_schedule(controller);
            if let Some(knob) = self.maybe_decide(controller) {
                let delay = if knob.value > active {
                    self.model.mt.launch_delay * (knob.value - active) as f64
                } else {
                    self.model.mt.terminate_delay * (active - knob.value) as f64
                };
                pending = Some((self.now_ms + delay, knob.value));
                accepting = false;
            }
        }
    }

    /// Emits a record for a trailing partial window, then returns the output.
    pub(crate) fn finish(mut self, controller: &mut Controller) -> RunOutput {
        let window = controller.window_mut().clone();
        if !window.is_empty() {
            self.close_period(controller.knob(), &window);
        }
        RunOutput {
            records: self.records,
            completed: self.completed,
            elapsed_ms: self.end_ms,
            energy_wms: self.energy_wms,
            latencies: self.latencies,
            slo_step_records: self.slo_step_records,
            change_records: self.change_records,
            infeasible: controller.infeasible(),
        }
    }
}
