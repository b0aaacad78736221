//! Per-sample iteration-time models at layer granularity.
//!
//! A training iteration runs backward propagation over the layers in reverse
//! order, pushes each layer's gradients to the parameter servers, pulls the
//! updated parameters back, and then runs forward propagation in layer order.
//! Three communication disciplines are modeled:
//!
//! * **Sequential** — all communication happens after BP finishes and before
//!   FP starts; nothing overlaps.
//! * **Wait-free** — a layer starts pushing as soon as its own BP and the
//!   next layer's push are done, so communication overlaps the remaining BP.
//!   Pushes and pulls are non-preemptive and run in reverse layer order on a
//!   full-duplex link.
//! * **Priority** — layers closer to the input preempt later layers'
//!   transfers at slice boundaries of size `slice`, so the first layer's
//!   parameters (which gate the next iteration's FP) arrive as early as
//!   possible.
//!
//! Each model yields a closed-form per-sample time `t` and a breakdown of
//! the critical path into FP, BP, and communication shares — the overlap
//! coefficients consumed by the [`crate::speed`] module. An independent
//! event-driven simulator ([`simulate_timeline_oracle`]) cross-checks the
//! closed forms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-layer timing of one training sample, all in seconds.
///
/// `comm` is the one-direction transfer time of the layer's gradients (push
/// and pull are assumed symmetric) at the job's reference configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerTimes {
    pub bp: f64,
    pub fp: f64,
    pub comm: f64,
}

impl LayerTimes {
    pub fn new(bp: f64, fp: f64, comm: f64) -> Self {
        Self { bp, fp, comm }
    }
}

/// Communication-computation overlap discipline of a training job.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrainingMode {
    Sequential,
    WaitFree,
    /// Priority-based preemption with parameter slices of `slice` seconds.
    Priority { slice: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum TimelineError {
    #[error("layer list is empty")]
    EmptyLayers,
    #[error("slice size must be nonnegative, got {0}")]
    NegativeSlice(f64),
    #[error("all layer times are zero")]
    DegenerateProfile,
}

/// Wait-free schedule: per-layer start times of gradient push, parameter
/// pull, and FP, plus the per-sample total.
#[derive(Debug, Clone, PartialEq)]
pub struct WaitFreeTimeline {
    /// Start of gradient sending per layer.
    pub send_start: Vec<f64>,
    /// Start of parameter receiving per layer.
    pub recv_start: Vec<f64>,
    /// Start of forward propagation per layer.
    pub fp_start: Vec<f64>,
    /// Per-sample iteration time.
    pub total: f64,
}

/// Priority schedule: per-layer communication end times (0 is a sentinel for
/// "finished no later than some preceding layer"), FP starts, and the total.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityTimeline {
    pub comm_end: Vec<f64>,
    pub fp_start: Vec<f64>,
    pub total: f64,
}

/// Fractions of FP, BP, and communication time left on the critical path
/// after overlap. Each lies in `(0, 1]` for positive profiles; the sequential
/// model has all three equal to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapCoefficients {
    pub fp: f64,
    pub bp: f64,
    pub comm: f64,
}

fn check_nonempty(layers: &[LayerTimes]) -> Result<(), TimelineError> {
    if layers.is_empty() {
        Err(TimelineError::EmptyLayers)
    } else {
        Ok(())
    }
}

/// Per-sample time of the fully serial model: BP, then every layer's push
/// and pull, then FP.
pub fn sequential_time(layers: &[LayerTimes]) -> Result<f64, TimelineError> {
    check_nonempty(layers)?;
    let bp: f64 = layers.iter().map(|l| l.bp).sum();
    let comm: f64 = layers.iter().map(|l| l.comm).sum();
    let fp: f64 = layers.iter().map(|l| l.fp).sum();
    Ok(bp + 2.0 * comm + fp)
}

/// Wait-free schedule.
///
/// With `n` layers indexed from the input layer, the last layer pushes as
/// soon as its BP finishes; every earlier layer waits for both its own BP
/// and the next layer's push. Pulls chain the same way behind the layer's
/// own push, and FP runs contiguously once the first layer's parameters
/// arrive.
pub fn waitfree_timeline(layers: &[LayerTimes]) -> Result<WaitFreeTimeline, TimelineError> {
    check_nonempty(layers)?;
    let n = layers.len();

    // bp_tail[j] = time when layer j finishes BP (BP runs in reverse order).
    let mut bp_tail = vec![0.0; n];
    let mut acc = 0.0;
    for j in (0..n).rev() {
        acc += layers[j].bp;
        bp_tail[j] = acc;
    }

    let mut send_start = vec![0.0; n];
    send_start[n - 1] = bp_tail[n - 1];
    for j in (0..n - 1).rev() {
        send_start[j] = bp_tail[j].max(send_start[j + 1] + layers[j + 1].comm);
    }

    let mut recv_start = vec![0.0; n];
    recv_start[n - 1] = send_start[n - 1] + layers[n - 1].comm;
    for j in (0..n - 1).rev() {
        recv_start[j] =
            (send_start[j] + layers[j].comm).max(recv_start[j + 1] + layers[j + 1].comm);
    }

    let mut fp_start = vec![0.0; n];
    fp_start[0] = recv_start[0] + layers[0].comm;
    for j in 1..n {
        fp_start[j] = fp_start[j - 1] + layers[j - 1].fp;
    }

    let total = fp_start[n - 1] + layers[n - 1].fp;
    Ok(WaitFreeTimeline {
        send_start,
        recv_start,
        fp_start,
        total,
    })
}

/// Priority schedule with slice size `slice`.
///
/// Layer 1 preempts everything, so its transfer runs uninterrupted right
/// after BP drains and ends at `sum(bp) + comm_1 + slice` (the trailing
/// slice is the pull of the last parameter slice). A later layer either fits
/// its communication inside the BP phase (sentinel 0) or spills past the
/// latest communication end seen so far.
pub fn priority_timeline(
    layers: &[LayerTimes],
    slice: f64,
) -> Result<PriorityTimeline, TimelineError> {
    check_nonempty(layers)?;
    if slice < 0.0 {
        return Err(TimelineError::NegativeSlice(slice));
    }
    let n = layers.len();
    let total_bp: f64 = layers.iter().map(|l| l.bp).sum();

    let mut comm_end = vec![0.0; n];
    comm_end[0] = total_bp + layers[0].comm + slice;
    let mut latest = comm_end[0];
    let mut comm_acc = 0.0; // sum of comm over layers 2..=j
    let mut bp_acc = 0.0; // sum of bp over layers 1..=j-1
    for j in 1..n {
        comm_acc += layers[j].comm;
        bp_acc += layers[j - 1].bp;
        if comm_acc > bp_acc {
            comm_end[j] = comm_acc - bp_acc + latest;
            latest = latest.max(comm_end[j]);
        }
    }

    let mut fp_start = vec![0.0; n];
    fp_start[0] = comm_end[0];
    for j in 1..n {
        fp_start[j] = (fp_start[j - 1] + layers[j - 1].fp).max(comm_end[j]);
    }

    let total = fp_start[n - 1] + layers[n - 1].fp;
    Ok(PriorityTimeline {
        comm_end,
        fp_start,
        total,
    })
}

/// Event-driven cross-check of the closed-form timelines; returns the
/// per-sample makespan.
///
/// BP completion events are fixed (reverse order, contiguous). Gradient
/// pushes and parameter pulls run on separate channels of one full-duplex
/// link, and FP of each layer is gated on both the previous layer's FP and
/// this layer's parameter arrival, with no contiguity assumed.
///
/// In `Priority` mode the transfers are served at slice granularity with a
/// channel-time ledger: slices that fit into the BP phase are absorbed
/// there, and a layer's spilled slices are appended after the latest
/// communication end among higher-priority layers. Agreement with
/// [`priority_timeline`] is exact when every `bp` and `comm` is an integer
/// multiple of the slice; with `slice == 0` the ledger degenerates to fluid
/// service.
pub fn simulate_timeline_oracle(
    layers: &[LayerTimes],
    mode: TrainingMode,
) -> Result<f64, TimelineError> {
    check_nonempty(layers)?;
    match mode {
        TrainingMode::Sequential => simulate_sequential(layers),
        TrainingMode::WaitFree => simulate_waitfree(layers),
        TrainingMode::Priority { slice } => simulate_priority(layers, slice),
    }
}

fn simulate_sequential(layers: &[LayerTimes]) -> Result<f64, TimelineError> {
    // Serial schedule: every phase waits for the previous one.
    let mut clock = 0.0;
    for l in layers.iter().rev() {
        clock += l.bp;
    }
    for l in layers.iter().rev() {
        clock += l.comm; // push
    }
    for l in layers.iter().rev() {
        clock += l.comm; // pull
    }
    for l in layers {
        clock += l.fp;
    }
    Ok(clock)
}

fn simulate_waitfree(layers: &[LayerTimes]) -> Result<f64, TimelineError> {
    let n = layers.len();
    let mut bp_done = vec![0.0; n];
    let mut clock = 0.0;
    for j in (0..n).rev() {
        clock += layers[j].bp;
        bp_done[j] = clock;
    }

    // Send channel serves layers n-1, n-2, ..., 0 non-preemptively; a send
    // starts when the layer's BP is done and the channel is free.
    let mut send_done = vec![0.0; n];
    let mut send_free = 0.0;
    for j in (0..n).rev() {
        let start = bp_done[j].max(send_free);
        send_free = start + layers[j].comm;
        send_done[j] = send_free;
    }

    // Receive channel in the same order; a pull starts when the layer's own
    // push is done and the channel is free.
    let mut recv_done = vec![0.0; n];
    let mut recv_free = 0.0;
    for j in (0..n).rev() {
        let start = send_done[j].max(recv_free);
        recv_free = start + layers[j].comm;
        recv_done[j] = recv_free;
    }

    // FP gated on parameter arrival per layer (not assumed contiguous).
    let mut fp_free = 0.0f64;
    for j in 0..n {
        let start = fp_free.max(recv_done[j]);
        fp_free = start + layers[j].fp;
    }
    Ok(fp_free)
}

fn simulate_priority(layers: &[LayerTimes], slice: f64) -> Result<f64, TimelineError> {
    if slice < 0.0 {
        return Err(TimelineError::NegativeSlice(slice));
    }
    let n = layers.len();
    let total_bp: f64 = layers.iter().map(|l| l.bp).sum();

    // Layer 1 transfer, slice by slice: pushes back-to-back from the end of
    // BP, each pull chasing its push on the other channel.
    let first_end = if slice > 0.0 {
        let slices = slices_of(layers[0].comm, slice);
        let mut send_end = total_bp;
        let mut recv_end = 0.0f64;
        for _ in 0..slices {
            send_end += slice;
            recv_end = recv_end.max(send_end) + slice;
        }
        if slices == 0 {
            total_bp
        } else {
            recv_end
        }
    } else {
        total_bp + layers[0].comm + slice
    };

    // Remaining layers: slice ledger. The BP phase offers bp-time slots to
    // layers 2..=j; whatever does not fit is appended after the latest
    // communication end among higher-priority layers.
    let mut comm_done = vec![0.0; n];
    comm_done[0] = first_end;
    let mut latest = first_end;
    let mut pending_slices: u64 = 0;
    let mut pending_time = 0.0; // fluid fallback for slice == 0
    let mut slot_time = 0.0;
    for j in 1..n {
        slot_time += layers[j - 1].bp;
        let spill = if slice > 0.0 {
            pending_slices += slices_of(layers[j].comm, slice);
            let capacity = (slot_time / slice + 1e-9).floor() as u64;
            pending_slices.saturating_sub(capacity) as f64 * slice
        } else {
            pending_time += layers[j].comm;
            pending_time - slot_time
        };
        if spill > 0.0 {
            comm_done[j] = latest + spill;
            latest = comm_done[j];
        }
    }

    let mut fp_free = comm_done[0];
    for j in 1..n {
        fp_free = (fp_free + layers[j - 1].fp).max(comm_done[j]);
    }
    Ok(fp_free + layers[n - 1].fp)
}

fn slices_of(comm: f64, slice: f64) -> u64 {
    (comm / slice).round().max(0.0) as u64
}

/// Critical-path overlap coefficients for the given mode.
///
/// The per-sample time is computed with the matching timeline, then split:
/// FP work is contiguous in all three models, the BP share is the prefix of
/// the critical path up to the point where the binding constraint switches
/// from backward propagation to a communication chain, and communication
/// gets the remainder. The split keeps the identity
/// `fp*sum(f) + bp*sum(b) + 2*comm*sum(r) == t` exact.
pub fn overlap_coefficients(
    layers: &[LayerTimes],
    mode: TrainingMode,
) -> Result<OverlapCoefficients, TimelineError> {
    check_nonempty(layers)?;
    let sum_bp: f64 = layers.iter().map(|l| l.bp).sum();
    let sum_fp: f64 = layers.iter().map(|l| l.fp).sum();
    let sum_comm: f64 = layers.iter().map(|l| l.comm).sum();
    if sum_bp == 0.0 && sum_fp == 0.0 && sum_comm == 0.0 {
        return Err(TimelineError::DegenerateProfile);
    }

    let (h_bp, h_comm) = match mode {
        TrainingMode::Sequential => (sum_bp, 2.0 * sum_comm),
        TrainingMode::WaitFree => {
            let tl = waitfree_timeline(layers)?;
            let h_bp = waitfree_bp_share(layers, &tl);
            (h_bp, tl.fp_start[0] - h_bp)
        }
        TrainingMode::Priority { slice } => {
            let tl = priority_timeline(layers, slice)?;
            (sum_bp, tl.total - sum_fp - sum_bp)
        }
    };

    Ok(OverlapCoefficients {
        fp: ratio_or_one(sum_fp, sum_fp),
        bp: ratio_or_one(h_bp, sum_bp),
        comm: ratio_or_one(h_comm, 2.0 * sum_comm),
    })
}

/// Walk the binding chain of the wait-free recursion backwards from the FP
/// start. The path runs down the pull chain, crosses to the push chain, and
/// bottoms out where a BP-completion term binds; ties prefer the
/// communication chain so the BP share is the earliest switch point.
fn waitfree_bp_share(layers: &[LayerTimes], tl: &WaitFreeTimeline) -> f64 {
    let n = layers.len();
    let mut bp_tail = vec![0.0; n];
    let mut acc = 0.0;
    for j in (0..n).rev() {
        acc += layers[j].bp;
        bp_tail[j] = acc;
    }

    // Pull chain: recv_start[j] = max(send_done(j), recv_start[j+1] + comm).
    let mut j = 0;
    while j < n - 1
        && tl.recv_start[j + 1] + layers[j + 1].comm >= tl.send_start[j] + layers[j].comm
    {
        j += 1;
    }
    // Push chain: send_start[j] = max(bp_tail[j], send_start[j+1] + comm).
    while j < n - 1 && tl.send_start[j + 1] + layers[j + 1].comm >= bp_tail[j] {
        j += 1;
    }
    bp_tail[j]
}

fn ratio_or_one(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        1.0
    } else {
        (num / den).min(1.0)
    }
}
