use std::collections::HashMap;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::hetero::{
    pack, run_on_pool, sleep_for, unpack, ArrayData, HeteroError, NamedArray, PartitionPlan,
    PoolProfile, TransferModel,
};
use crate::num::Real;
use crate::physics::{Chunk, ColumnKernel, ColumnOutput, ColumnState};
use crate::scheduler::ExecMode;

/// Timings of one offload step. In simulated mode all times are modeled.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HeteroMetrics {
    pub timestep: usize,
    pub host_columns: usize,
    pub device_columns: usize,
    pub host_busy: f64,
    pub device_busy: f64,
    pub host_finish: f64,
    /// Includes both transfer directions.
    pub device_finish: f64,
    pub transfer_s: f64,
    /// Array bytes sent to and from the device, excluding alignment.
    pub bytes_transferred: usize,
    pub n_transfers: usize,
    pub wall_s: f64,
}

impl HeteroMetrics {
    /// `|host_finish - device_finish| / wall`.
    pub fn finish_imbalance(&self) -> f64 {
        if self.wall_s <= 0.0 {
            return 0.0;
        }
        (self.host_finish - self.device_finish).abs() / self.wall_s
    }
}

struct Shipment {
    arrays: Vec<NamedArray>,
    seconds: f64,
    bytes: usize,
    transfers: usize,
}

/// Emulates one host/device pair. Holds the device-resident scalars of
/// every chunk it has offloaded.
pub struct OffloadEngine<K> {
    kernel: K,
    host: PoolProfile,
    device: PoolProfile,
    transfer: TransferModel,
    mode: ExecMode,
    resident: HashMap<usize, Vec<NamedArray>>,
}

const SCALAR_ARRAYS: [&str; 3] = ["instability", "col_id", "constants"];

impl<K> OffloadEngine<K> {
    pub fn new(
        kernel: K,
        host: PoolProfile,
        device: PoolProfile,
        transfer: TransferModel,
        mode: ExecMode,
    ) -> Result<Self, HeteroError> {
        host.validate()?;
        device.validate()?;
        transfer.validate()?;
        Ok(Self {
            kernel,
            host,
            device,
            transfer,
            mode,
            resident: HashMap::new(),
        })
    }

    pub fn transfer(&self) -> &TransferModel {
        &self.transfer
    }

    pub fn host(&self) -> &PoolProfile {
        &self.host
    }

    pub fn device(&self) -> &PoolProfile {
        &self.device
    }

    /// Bytes of the per-column scalar payload for `n_device` columns.
    pub fn scalar_bytes<T: Real>(n_device: usize) -> usize {
        n_device * (T::BYTES + 8) + 4 * 8
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    fn ship(transfer: &TransferModel, arrays: Vec<NamedArray>) -> Result<Shipment, HeteroError> {
        let bytes: usize = arrays.iter().map(|a| a.data.byte_len()).sum();
        let (arrays, wire_bytes) = if transfer.packed {
            let buffer = pack(&arrays)?;
            let wire = buffer.payload_bytes();
            (unpack(&buffer)?, wire)
        } else {
            (arrays, bytes)
        };
        let seconds = transfer.transfer_time(arrays.len(), wire_bytes);
        if !(seconds >= 0.0) {
            return Err(HeteroError::InvalidTransfer(format!(
                "modeled transfer time {seconds}"
            )));
        }
        Ok(Shipment {
            transfers: transfer.transfers_for(arrays.len()),
            arrays,
            seconds,
            bytes,
        })
    }

    /// Runs one chunk with `plan`: the host pool computes its columns while
    /// the device share is shipped, computed by the device pool, and
    /// shipped back. Outputs are in chunk order.
    pub fn offload_step<T: Real>(
        &mut self,
        chunk: &Chunk<T>,
        plan: &PartitionPlan,
        timestep: usize,
    ) -> Result<(Vec<ColumnOutput<T>>, HeteroMetrics), HeteroError>
    where
        K: ColumnKernel<T>,
    {
        plan.validate(chunk.len())?;
        let cols = chunk.columns();
        let host_cols: Vec<ColumnState<T>> =
            plan.host_columns.iter().map(|&i| cols[i].clone()).collect();
        let dev_cols: Vec<&ColumnState<T>> = plan.device_columns.iter().map(|&i| &cols[i]).collect();
        let levels = chunk.levels();

        let mut metrics = HeteroMetrics {
            timestep,
            host_columns: host_cols.len(),
            device_columns: dev_cols.len(),
            ..Default::default()
        };

        let outbound = if dev_cols.is_empty() {
            None
        } else {
            Some(self.device_inputs(chunk.chunk_id(), &dev_cols, levels, timestep)?)
        };

        let step_start = Instant::now();
        let (host_result, device_result) = match self.mode {
            ExecMode::Simulated => {
                let host = run_on_pool(&host_cols, &self.kernel, &self.host, self.mode);
                let device = outbound.map(|arrays| {
                    Self::device_side::<T>(&self.kernel, &self.device, &self.transfer, self.mode, &mut self.resident, chunk.chunk_id(), arrays, levels)
                });
                (host, device)
            }
            ExecMode::Measured => {
                let kernel = &self.kernel;
                let host_pool = self.host;
                let (device_pool, transfer, resident) = (&self.device, &self.transfer, &mut self.resident);
                thread::scope(|scope| {
                    let host = scope.spawn(|| {
                        let r = run_on_pool(&host_cols, kernel, &host_pool, ExecMode::Measured);
                        (r, step_start.elapsed().as_secs_f64())
                    });
                    let device = outbound.map(|arrays| {
                        let r = Self::device_side::<T>(kernel, device_pool, transfer, ExecMode::Measured, resident, chunk.chunk_id(), arrays, levels);
                        (r, step_start.elapsed().as_secs_f64())
                    });
                    let (host_r, host_done) = host.join().expect("host pool thread panicked");
                    metrics.host_finish = host_done;
                    if let Some((_, done)) = &device {
                        metrics.device_finish = *done;
                    }
                    (host_r, device.map(|(r, _)| r))
                })
            }
        };

        let (host_out, host_busy) = host_result?;
        metrics.host_busy = host_busy;
        let mut merged: Vec<Option<ColumnOutput<T>>> = (0..cols.len()).map(|_| None).collect();
        for (&i, out) in plan.host_columns.iter().zip(host_out) {
            merged[i] = Some(out);
        }
        if let Some(result) = device_result {
            let (dev_out, dev_busy, t_in, t_out) = result?;
            metrics.device_busy = dev_busy;
            metrics.transfer_s = t_in.seconds + t_out.seconds;
            metrics.bytes_transferred = t_in.bytes + t_out.bytes;
            metrics.n_transfers = t_in.transfers + t_out.transfers;
            for (&i, out) in plan.device_columns.iter().zip(dev_out) {
                merged[i] = Some(out);
            }
        }
        match self.mode {
            ExecMode::Simulated => {
                metrics.host_finish = metrics.host_busy;
                if metrics.device_columns > 0 {
                    metrics.device_finish = metrics.transfer_s + metrics.device_busy;
                }
                metrics.wall_s = metrics.host_finish.max(metrics.device_finish);
            }
            ExecMode::Measured => metrics.wall_s = step_start.elapsed().as_secs_f64(),
        }
        let outputs = merged
            .into_iter()
            .map(|o| o.expect("plan covers every column"))
            .collect();
        Ok((outputs, metrics))
    }

    /// Arrays the host sends for the device share; scalars are left out
    /// when the device already holds identical ones.
    fn device_inputs<T: Real>(
        &self,
        chunk_id: usize,
        dev_cols: &[&ColumnState<T>],
        levels: usize,
        timestep: usize,
    ) -> Result<Vec<NamedArray>, HeteroError> {
        let flat = |f: fn(&ColumnState<T>) -> &[T]| -> Vec<T> {
            dev_cols.iter().flat_map(|c| f(c).iter().copied()).collect()
        };
        let mut arrays = vec![
            NamedArray::new("temperature", T::to_array(&flat(ColumnState::temperature))),
            NamedArray::new("humidity", T::to_array(&flat(ColumnState::humidity))),
        ];
        let s: Vec<T> = dev_cols.iter().map(|c| c.instability()).collect();
        let scalars = vec![
            NamedArray::new("instability", T::to_array(&s)),
            NamedArray::new(
                "col_id",
                ArrayData::U64(dev_cols.iter().map(|c| c.col_id() as u64).collect()),
            ),
            NamedArray::new(
                "constants",
                ArrayData::F64(vec![levels as f64, dev_cols.len() as f64, chunk_id as f64, 0.0]),
            ),
        ];
        let cached = self.resident.get(&chunk_id).is_some_and(|r| same_bits(r, &scalars));
        if !(self.transfer.resident_scalars && timestep > 0 && cached) {
            arrays.extend(scalars);
        }
        Ok(arrays)
    }

    #[allow(clippy::type_complexity, clippy::too_many_arguments)]
    fn device_side<T: Real>(
        kernel: &K,
        device: &PoolProfile,
        transfer: &TransferModel,
        mode: ExecMode,
        resident_store: &mut HashMap<usize, Vec<NamedArray>>,
        chunk_id: usize,
        outbound: Vec<NamedArray>,
        levels: usize,
    ) -> Result<(Vec<ColumnOutput<T>>, f64, Shipment, Shipment), HeteroError>
    where
        K: ColumnKernel<T>,
    {
        let t_in = Self::ship(transfer, outbound)?;
        if matches!(mode, ExecMode::Measured) {
            sleep_for(t_in.seconds);
        }
        let find = |arrays: &[NamedArray], name: &str| -> Option<ArrayData> {
            arrays.iter().find(|a| a.name == name).map(|a| a.data.clone())
        };
        if find(&t_in.arrays, "col_id").is_some() {
            let scalars = t_in
                .arrays
                .iter()
                .filter(|a| SCALAR_ARRAYS.contains(&a.name.as_str()))
                .cloned()
                .collect();
            resident_store.insert(chunk_id, scalars);
        }
        let resident = resident_store
            .get(&chunk_id)
            .ok_or_else(|| HeteroError::Payload("no scalars on device".into()))?;
        let missing = |n: &str| HeteroError::Payload(format!("missing array `{n}`"));
        let typed = |data: Option<ArrayData>, n: &str| -> Result<Vec<T>, HeteroError> {
            T::from_array(&data.ok_or_else(|| missing(n))?)
                .ok_or_else(|| HeteroError::Payload(format!("array `{n}` has the wrong type")))
        };
        let temp = typed(find(&t_in.arrays, "temperature"), "temperature")?;
        let hum = typed(find(&t_in.arrays, "humidity"), "humidity")?;
        let s = typed(find(resident, "instability"), "instability")?;
        let ids = match find(resident, "col_id") {
            Some(ArrayData::U64(v)) => v,
            _ => return Err(missing("col_id")),
        };
        if temp.len() != ids.len() * levels || hum.len() != temp.len() || s.len() != ids.len() {
            return Err(HeteroError::Payload("array lengths disagree".into()));
        }
        let columns = ids
            .iter()
            .enumerate()
            .map(|(j, &id)| {
                let r = j * levels..(j + 1) * levels;
                ColumnState::new(id as usize, s[j], temp[r.clone()].to_vec(), hum[r].to_vec())
                    .map_err(|e| HeteroError::Payload(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;

        let (outs, busy) = run_on_pool(&columns, kernel, device, mode)?;

        let cat = |f: fn(&ColumnOutput<T>) -> &[T]| -> Vec<T> {
            outs.iter().flat_map(|o| f(o).iter().copied()).collect()
        };
        let back = vec![
            NamedArray::new("precip", T::to_array(&outs.iter().map(|o| o.precip).collect::<Vec<_>>())),
            NamedArray::new("tend_t", T::to_array(&cat(|o| &o.tend_t))),
            NamedArray::new("tend_q", T::to_array(&cat(|o| &o.tend_q))),
            NamedArray::new(
                "exited_early",
                ArrayData::U8(outs.iter().map(|o| u8::from(o.exited_early)).collect()),
            ),
            NamedArray::new("work_units", ArrayData::U64(outs.iter().map(|o| o.work_units).collect())),
        ];
        let t_out = Self::ship(transfer, back)?;
        if matches!(mode, ExecMode::Measured) {
            sleep_for(t_out.seconds);
        }
        let precip = typed(find(&t_out.arrays, "precip"), "precip")?;
        let tend_t = typed(find(&t_out.arrays, "tend_t"), "tend_t")?;
        let tend_q = typed(find(&t_out.arrays, "tend_q"), "tend_q")?;
        let (Some(ArrayData::U8(exited)), Some(ArrayData::U64(work))) = (
            find(&t_out.arrays, "exited_early"),
            find(&t_out.arrays, "work_units"),
        ) else {
            return Err(missing("exited_early/work_units"));
        };
        let merged = ids
            .iter()
            .enumerate()
            .map(|(j, &id)| {
                let r = j * levels..(j + 1) * levels;
                ColumnOutput {
                    col_id: id as usize,
                    precip: precip[j],
                    tend_t: tend_t[r.clone()].to_vec(),
                    tend_q: tend_q[r].to_vec(),
                    exited_early: exited[j] != 0,
                    work_units: work[j],
                }
            })
            .collect();
        Ok((merged, busy, t_in, t_out))
    }
}

fn same_bits(a: &[NamedArray], b: &[NamedArray]) -> bool {
    let raw = |d: &ArrayData| -> Vec<u64> {
        match d {
            ArrayData::F64(v) => v.iter().map(|x| x.to_bits()).collect(),
            ArrayData::F32(v) => v.iter().map(|x| u64::from(x.to_bits())).collect(),
            ArrayData::U64(v) => v.clone(),
            ArrayData::U8(v) => v.iter().map(|&x| u64::from(x)).collect(),
        }
    };
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.name == y.name && x.data.dtype() == y.data.dtype() && raw(&x.data) == raw(&y.data)
        })
}

/// Mean times of host-only, device-only and partitioned runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeteroSummary {
    pub host_only_s: f64,
    pub device_only_s: f64,
    pub total_s: f64,
    pub host_s: f64,
    pub device_s: f64,
    /// `total - max(host, device)`.
    pub overhead_s: f64,
}

impl HeteroSummary {
    pub const CSV_HEADER: &'static str = "host_only_s,device_only_s,total_s,host_s,device_s,overhead_s";

    pub fn speedup_over_device(&self) -> f64 {
        self.device_only_s / self.total_s
    }

    pub fn speedup_over_host(&self) -> f64 {
        self.host_only_s / self.total_s
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.host_only_s,
            self.device_only_s,
            self.total_s,
            self.host_s,
            self.device_s,
            self.overhead_s
        )
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

pub fn hetero_summary(
    host_only: &[HeteroMetrics],
    device_only: &[HeteroMetrics],
    partitioned: &[HeteroMetrics],
) -> Result<HeteroSummary, HeteroError> {
    if host_only.is_empty() || device_only.is_empty() || partitioned.is_empty() {
        return Err(HeteroError::InvalidPlan(
            "summary needs at least one step of each mode".into(),
        ));
    }
    let total_s = mean(partitioned.iter().map(|m| m.wall_s));
    let host_s = mean(partitioned.iter().map(|m| m.host_busy));
    let device_s = mean(partitioned.iter().map(|m| m.device_busy));
    Ok(HeteroSummary {
        host_only_s: mean(host_only.iter().map(|m| m.wall_s)),
        device_only_s: mean(device_only.iter().map(|m| m.wall_s)),
        total_s,
        host_s,
        device_s,
        overhead_s: total_s - host_s.max(device_s),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{ConvectionSuite, GridSpec, KernelVariant};

    fn setup(n: usize) -> (Chunk<f64>, ConvectionSuite) {
        let chunk = Chunk::new(0, GridSpec::new(n, 30, 5).generate().unwrap()).unwrap();
        (chunk, ConvectionSuite::new(0.5, KernelVariant::Naive))
    }

    #[test]
    fn split_outputs_match_single_pool() {
        let (chunk, kernel) = setup(40);
        let reference = kernel.run_chunk(&chunk).unwrap();
        for packed in [true, false] {
            let tm = TransferModel { packed, ..Default::default() };
            let mut engine = OffloadEngine::new(
                &kernel,
                PoolProfile::host(4),
                PoolProfile::device(8),
                tm,
                ExecMode::Simulated,
            )
            .unwrap();
            for f in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let plan = PartitionPlan::from_fraction(f, chunk.len()).unwrap();
                let (out, m) = engine.offload_step(&chunk, &plan, 0).unwrap();
                assert_eq!(out, reference);
                if f == 0.0 {
                    assert_eq!(m.transfer_s, 0.0);
                    assert_eq!(m.n_transfers, 0);
                }
                if f == 1.0 {
                    assert_eq!(m.host_busy, 0.0);
                }
            }
        }
    }

    #[test]
    fn resident_scalars_skip_later_steps() {
        let (chunk, kernel) = setup(32);
        let plan = PartitionPlan::from_fraction(0.5, 32).unwrap();
        let bytes = |resident_scalars| {
            let tm = TransferModel { resident_scalars, ..Default::default() };
            let mut e = OffloadEngine::new(&kernel, PoolProfile::host(2), PoolProfile::device(4), tm, ExecMode::Simulated).unwrap();
            (0..5)
                .map(|t| e.offload_step(&chunk, &plan, t).unwrap().1.bytes_transferred)
                .sum::<usize>()
        };
        let saved = bytes(false) - bytes(true);
        assert_eq!(saved, OffloadEngine::<ConvectionSuite>::scalar_bytes::<f64>(16) * 4);
    }

    #[test]
    fn summary_requires_all_modes() {
        let m = HeteroMetrics { wall_s: 2.0, host_busy: 1.0, device_busy: 1.5, ..Default::default() };
        assert!(hetero_summary(&[], std::slice::from_ref(&m), std::slice::from_ref(&m)).is_err());
        let s = hetero_summary(std::slice::from_ref(&m), std::slice::from_ref(&m), &[m.clone()]).unwrap();
        assert_eq!(s.overhead_s, 0.5);
        assert_eq!(s.csv_row().split(',').count(), 6);
    }
}
