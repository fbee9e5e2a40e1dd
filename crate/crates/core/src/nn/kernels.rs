//! Raw numerical kernels shared by the tape's forward and backward passes.
//!
//! Every kernel writes each output slot from exactly one thread and sums
//! contributions in a fixed order, so results are bit-identical regardless
//! of thread count (`RAYON_NUM_THREADS`).

use rayon::prelude::*;

/// Parallelize a batch loop only when there is enough work per item.
const PAR_MIN_ITEM_WORK: usize = 8192;
const PAR_MIN_ITEMS: usize = 4;

fn use_par(items: usize, item_work: usize) -> bool {
    items >= PAR_MIN_ITEMS && item_work >= PAR_MIN_ITEM_WORK
}

// ---------------------------------------------------------------- dense --

/// y[r, :] = x[r, :] · w + bias, with x: [rows, in_w], w: [in_w, out_w].
pub fn dense_forward(
    x: &[f64],
    rows: usize,
    in_w: usize,
    w: &[f64],
    bias: &[f64],
    out_w: usize,
    y: &mut [f64],
) {
    let run = |xr: &[f64], yr: &mut [f64]| {
        yr.copy_from_slice(bias);
        for (k, &xv) in xr.iter().enumerate() {
            let wrow = &w[k * out_w..(k + 1) * out_w];
            for (yv, &wv) in yr.iter_mut().zip(wrow) {
                *yv += xv * wv;
            }
        }
    };
    if use_par(rows, in_w * out_w) {
        y.par_chunks_mut(out_w)
            .zip(x.par_chunks(in_w))
            .for_each(|(yr, xr)| run(xr, yr));
    } else {
        for r in 0..rows {
            run(&x[r * in_w..(r + 1) * in_w], &mut y[r * out_w..(r + 1) * out_w]);
        }
    }
}

/// Accumulates into gx, gw, gb.
pub fn dense_backward(
    x: &[f64],
    rows: usize,
    in_w: usize,
    w: &[f64],
    out_w: usize,
    gy: &[f64],
    gx: &mut [f64],
    gw: &mut [f64],
    gb: &mut [f64],
) {
    // gx[r, k] = gy[r, :] · w[k, :]
    let run_gx = |gyr: &[f64], gxr: &mut [f64]| {
        for (k, gxv) in gxr.iter_mut().enumerate() {
            let wrow = &w[k * out_w..(k + 1) * out_w];
            let mut acc = 0.0;
            for (gv, wv) in gyr.iter().zip(wrow) {
                acc += gv * wv;
            }
            *gxv += acc;
        }
    };
    if use_par(rows, in_w * out_w) {
        gx.par_chunks_mut(in_w)
            .zip(gy.par_chunks(out_w))
            .for_each(|(gxr, gyr)| run_gx(gyr, gxr));
    } else {
        for r in 0..rows {
            run_gx(&gy[r * out_w..(r + 1) * out_w], &mut gx[r * in_w..(r + 1) * in_w]);
        }
    }
    // gw[k, :] += sum_r x[r, k] * gy[r, :], each gw row owned by one task
    let run_gw = |k: usize, gwr: &mut [f64]| {
        for r in 0..rows {
            let xv = x[r * in_w + k];
            if xv != 0.0 {
                let gyr = &gy[r * out_w..(r + 1) * out_w];
                for (gwv, &gv) in gwr.iter_mut().zip(gyr) {
                    *gwv += xv * gv;
                }
            }
        }
    };
    if use_par(in_w, rows * out_w) {
        gw.par_chunks_mut(out_w)
            .enumerate()
            .for_each(|(k, gwr)| run_gw(k, gwr));
    } else {
        for k in 0..in_w {
            run_gw(k, &mut gw[k * out_w..(k + 1) * out_w]);
        }
    }
    for r in 0..rows {
        let gyr = &gy[r * out_w..(r + 1) * out_w];
        for (gbv, &gv) in gb.iter_mut().zip(gyr) {
            *gbv += gv;
        }
    }
}

// ----------------------------------------------------------------- conv --

/// Strided cross-correlation with symmetric zero padding (k - 1) / 2 per
/// side. Output extent per axis: (e + 2p - k) / s + 1.
pub fn conv_out_extent(e: usize, k: usize, s: usize) -> usize {
    let p = (k - 1) / 2;
    (e + 2 * p - k) / s + 1
}

/// x: [batch, ci, e...], wgt: [co, ci, k^d], y: [batch, co, o...].
#[allow(clippy::too_many_arguments)]
pub fn conv_forward(
    x: &[f64],
    batch: usize,
    ci: usize,
    ext: &[usize],
    wgt: &[f64],
    bias: &[f64],
    co: usize,
    k: usize,
    s: usize,
    y: &mut [f64],
) {
    let oext: Vec<usize> = ext.iter().map(|&e| conv_out_extent(e, k, s)).collect();
    let in_plane: usize = ext.iter().product();
    let out_plane: usize = oext.iter().product();
    let x_item = ci * in_plane;
    let y_item = co * out_plane;
    let p = ((k - 1) / 2) as isize;
    let kd = k.pow(ext.len() as u32);

    let run = |xb: &[f64], yb: &mut [f64]| match ext.len() {
        2 => conv2d_item(xb, ci, ext, wgt, bias, co, k, s, p, &oext, yb),
        3 => conv3d_item(xb, ci, ext, wgt, bias, co, k, s, p, &oext, yb),
        d => unreachable!("unsupported conv dims {d}"),
    };
    if use_par(batch, co * out_plane * ci * kd) {
        y.par_chunks_mut(y_item)
            .zip(x.par_chunks(x_item))
            .for_each(|(yb, xb)| run(xb, yb));
    } else {
        for b in 0..batch {
            run(&x[b * x_item..(b + 1) * x_item], &mut y[b * y_item..(b + 1) * y_item]);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv2d_item(
    xb: &[f64],
    ci: usize,
    ext: &[usize],
    wgt: &[f64],
    bias: &[f64],
    co: usize,
    k: usize,
    s: usize,
    p: isize,
    oext: &[usize],
    yb: &mut [f64],
) {
    let (h, w) = (ext[0], ext[1]);
    let (oh, ow) = (oext[0], oext[1]);
    let in_plane = h * w;
    for oc in 0..co {
        let wc = &wgt[oc * ci * k * k..(oc + 1) * ci * k * k];
        let yc = &mut yb[oc * oh * ow..(oc + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[oc];
                for ic in 0..ci {
                    let xp = &xb[ic * in_plane..(ic + 1) * in_plane];
                    let wp = &wc[ic * k * k..(ic + 1) * k * k];
                    for ky in 0..k {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let xrow = &xp[iy as usize * w..(iy as usize + 1) * w];
                        let wrow = &wp[ky * k..(ky + 1) * k];
                        for kx in 0..k {
                            let ix = (ox * s + kx) as isize - p;
                            if ix >= 0 && ix < w as isize {
                                acc += xrow[ix as usize] * wrow[kx];
                            }
                        }
                    }
                }
                yc[oy * ow + ox] = acc;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv3d_item(
    xb: &[f64],
    ci: usize,
    ext: &[usize],
    wgt: &[f64],
    bias: &[f64],
    co: usize,
    k: usize,
    s: usize,
    p: isize,
    oext: &[usize],
    yb: &mut [f64],
) {
    let (e0, e1, e2) = (ext[0], ext[1], ext[2]);
    let (o0, o1, o2) = (oext[0], oext[1], oext[2]);
    let in_plane = e0 * e1 * e2;
    let k3 = k * k * k;
    for oc in 0..co {
        let wc = &wgt[oc * ci * k3..(oc + 1) * ci * k3];
        let yc = &mut yb[oc * o0 * o1 * o2..(oc + 1) * o0 * o1 * o2];
        for oa in 0..o0 {
            for ob in 0..o1 {
                for ocx in 0..o2 {
                    let mut acc = bias[oc];
                    for ic in 0..ci {
                        let xp = &xb[ic * in_plane..(ic + 1) * in_plane];
                        let wp = &wc[ic * k3..(ic + 1) * k3];
                        for ka in 0..k {
                            let ia = (oa * s + ka) as isize - p;
                            if ia < 0 || ia >= e0 as isize {
                                continue;
                            }
                            for kb in 0..k {
                                let ib = (ob * s + kb) as isize - p;
                                if ib < 0 || ib >= e1 as isize {
                                    continue;
                                }
                                let base = (ia as usize * e1 + ib as usize) * e2;
                                let wrow = &wp[(ka * k + kb) * k..(ka * k + kb + 1) * k];
                                for kc in 0..k {
                                    let icx = (ocx * s + kc) as isize - p;
                                    if icx >= 0 && icx < e2 as isize {
                                        acc += xp[base + icx as usize] * wrow[kc];
                                    }
                                }
                            }
                        }
                    }
                    yc[(oa * o1 + ob) * o2 + ocx] = acc;
                }
            }
        }
    }
}

/// Accumulates into gx, gw, gb.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward(
    x: &[f64],
    batch: usize,
    ci: usize,
    ext: &[usize],
    wgt: &[f64],
    co: usize,
    k: usize,
    s: usize,
    gy: &[f64],
    gx: &mut [f64],
    gw: &mut [f64],
    gb: &mut [f64],
) {
    let d = ext.len();
    let oext: Vec<usize> = ext.iter().map(|&e| conv_out_extent(e, k, s)).collect();
    let in_plane: usize = ext.iter().product();
    let out_plane: usize = oext.iter().product();
    let x_item = ci * in_plane;
    let y_item = co * out_plane;
    let p = ((k - 1) / 2) as isize;
    let kd = k.pow(d as u32);

    // gx: scatter gy through the kernel, one batch item per task.
    let run_gx = |gyb: &[f64], gxb: &mut [f64]| {
        for oc in 0..co {
            let wc = &wgt[oc * ci * kd..(oc + 1) * ci * kd];
            let gyc = &gyb[oc * out_plane..(oc + 1) * out_plane];
            for (o_flat, &g) in gyc.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let oidx = unflatten(o_flat, &oext);
                for ic in 0..ci {
                    let gxp = ic * in_plane;
                    let wp = &wc[ic * kd..(ic + 1) * kd];
                    scatter_kernel(d, k, s, p, &oidx, ext, |i_flat, k_flat| {
                        gxb[gxp + i_flat] += g * wp[k_flat];
                    });
                }
            }
        }
    };
    if use_par(batch, co * out_plane * ci * kd) {
        gx.par_chunks_mut(x_item)
            .zip(gy.par_chunks(y_item))
            .for_each(|(gxb, gyb)| run_gx(gyb, gxb));
    } else {
        for b in 0..batch {
            run_gx(&gy[b * y_item..(b + 1) * y_item], &mut gx[b * x_item..(b + 1) * x_item]);
        }
    }

    // gw: each output-channel slab owned by one task, batch summed in order.
    let run_gw = |oc: usize, gwc: &mut [f64]| {
        for b in 0..batch {
            let xb = &x[b * x_item..(b + 1) * x_item];
            let gyc = &gy[b * y_item + oc * out_plane..b * y_item + (oc + 1) * out_plane];
            for (o_flat, &g) in gyc.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let oidx = unflatten(o_flat, &oext);
                for ic in 0..ci {
                    let xp = &xb[ic * in_plane..(ic + 1) * in_plane];
                    let gwp = ic * kd;
                    scatter_kernel(d, k, s, p, &oidx, ext, |i_flat, k_flat| {
                        gwc[gwp + k_flat] += g * xp[i_flat];
                    });
                }
            }
        }
    };
    if use_par(co, batch * out_plane * ci * kd) {
        gw.par_chunks_mut(ci * kd)
            .enumerate()
            .for_each(|(oc, gwc)| run_gw(oc, gwc));
    } else {
        for oc in 0..co {
            run_gw(oc, &mut gw[oc * ci * kd..(oc + 1) * ci * kd]);
        }
    }

    for b in 0..batch {
        for oc in 0..co {
            let gyc = &gy[b * y_item + oc * out_plane..b * y_item + (oc + 1) * out_plane];
            gb[oc] += gyc.iter().sum::<f64>();
        }
    }
}

// ------------------------------------------------------- conv transpose --

/// Fractionally-strided (transposed) convolution: output extent = e * s.
/// x: [batch, ci, e...], wgt: [ci, co, k^d], y: [batch, co, e*s...].
#[allow(clippy::too_many_arguments)]
pub fn conv_transpose_forward(
    x: &[f64],
    batch: usize,
    ci: usize,
    ext: &[usize],
    wgt: &[f64],
    bias: &[f64],
    co: usize,
    k: usize,
    s: usize,
    y: &mut [f64],
) {
    let d = ext.len();
    let oext: Vec<usize> = ext.iter().map(|&e| e * s).collect();
    let in_plane: usize = ext.iter().product();
    let out_plane: usize = oext.iter().product();
    let x_item = ci * in_plane;
    let y_item = co * out_plane;
    let p = ((k - 1) / 2) as isize;
    let kd = k.pow(d as u32);

    let run = |xb: &[f64], yb: &mut [f64]| {
        for oc in 0..co {
            let yc = &mut yb[oc * out_plane..(oc + 1) * out_plane];
            yc.iter_mut().for_each(|v| *v = bias[oc]);
        }
        for ic in 0..ci {
            let xp = &xb[ic * in_plane..(ic + 1) * in_plane];
            let wi = &wgt[ic * co * kd..(ic + 1) * co * kd];
            for (i_flat, &xv) in xp.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let iidx = unflatten(i_flat, ext);
                for oc in 0..co {
                    let wp = &wi[oc * kd..(oc + 1) * kd];
                    let yc = &mut yb[oc * out_plane..(oc + 1) * out_plane];
                    scatter_kernel(d, k, s, p, &iidx, &oext, |o_flat, k_flat| {
                        yc[o_flat] += xv * wp[k_flat];
                    });
                }
            }
        }
    };
    if use_par(batch, ci * in_plane * co * kd) {
        y.par_chunks_mut(y_item)
            .zip(x.par_chunks(x_item))
            .for_each(|(yb, xb)| run(xb, yb));
    } else {
        for b in 0..batch {
            run(&x[b * x_item..(b + 1) * x_item], &mut y[b * y_item..(b + 1) * y_item]);
        }
    }
}

/// Accumulates into gx, gw, gb.
#[allow(clippy::too_many_arguments)]
pub fn conv_transpose_backward(
    x: &[f64],
    batch: usize,
    ci: usize,
    ext: &[usize],
    wgt: &[f64],
    co: usize,
    k: usize,
    s: usize,
    gy: &[f64],
    gx: &mut [f64],
    gw: &mut [f64],
    gb: &mut [f64],
) {
    let d = ext.len();
    let oext: Vec<usize> = ext.iter().map(|&e| e * s).collect();
    let in_plane: usize = ext.iter().product();
    let out_plane: usize = oext.iter().product();
    let x_item = ci * in_plane;
    let y_item = co * out_plane;
    let p = ((k - 1) / 2) as isize;
    let kd = k.pow(d as u32);

    // gx: gather from gy, one batch item per task.
    let run_gx = |gyb: &[f64], gxb: &mut [f64]| {
        for ic in 0..ci {
            let gxp = &mut gxb[ic * in_plane..(ic + 1) * in_plane];
            let wi = &wgt[ic * co * kd..(ic + 1) * co * kd];
            for (i_flat, gxv) in gxp.iter_mut().enumerate() {
                let iidx = unflatten(i_flat, ext);
                let mut acc = 0.0;
                for oc in 0..co {
                    let wp = &wi[oc * kd..(oc + 1) * kd];
                    let gyc = &gyb[oc * out_plane..(oc + 1) * out_plane];
                    scatter_kernel(d, k, s, p, &iidx, &oext, |o_flat, k_flat| {
                        acc += gyc[o_flat] * wp[k_flat];
                    });
                }
                *gxv += acc;
            }
        }
    };
    if use_par(batch, ci * in_plane * co * kd) {
        gx.par_chunks_mut(x_item)
            .zip(gy.par_chunks(y_item))
            .for_each(|(gxb, gyb)| run_gx(gyb, gxb));
    } else {
        for b in 0..batch {
            run_gx(&gy[b * y_item..(b + 1) * y_item], &mut gx[b * x_item..(b + 1) * x_item]);
        }
    }

    // gw: each input-channel slab owned by one task.
    let run_gw = |ic: usize, gwi: &mut [f64]| {
        for b in 0..batch {
            let xp = &x[b * x_item + ic * in_plane..b * x_item + (ic + 1) * in_plane];
            let gyb = &gy[b * y_item..(b + 1) * y_item];
            for (i_flat, &xv) in xp.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let iidx = unflatten(i_flat, ext);
                for oc in 0..co {
                    let gyc = &gyb[oc * out_plane..(oc + 1) * out_plane];
                    let gwp = oc * kd;
                    scatter_kernel(d, k, s, p, &iidx, &oext, |o_flat, k_flat| {
                        gwi[gwp + k_flat] += xv * gyc[o_flat];
                    });
                }
            }
        }
    };
    if use_par(ci, batch * in_plane * co * kd) {
        gw.par_chunks_mut(co * kd)
            .enumerate()
            .for_each(|(ic, gwi)| run_gw(ic, gwi));
    } else {
        for ic in 0..ci {
            run_gw(ic, &mut gw[ic * co * kd..(ic + 1) * co * kd]);
        }
    }

    for b in 0..batch {
        for oc in 0..co {
            let gyc = &gy[b * y_item + oc * out_plane..b * y_item + (oc + 1) * out_plane];
            gb[oc] += gyc.iter().sum::<f64>();
        }
    }
}

// -------------------------------------------------------------- helpers --

fn unflatten(mut flat: usize, ext: &[usize]) -> [usize; 3] {
    let mut idx = [0usize; 3];
    for a in (0..ext.len()).rev() {
        idx[a] = flat % ext[a];
        flat /= ext[a];
    }
    idx
}

/// Visit all (anchor_flat, kernel_flat) pairs linking a base index to the
/// `anchor` grid through `anchor_pos = base_pos * s + k_off - p`, skipping
/// out-of-range positions. Shared by conv scatter and transpose gather: for
/// conv backward the base is an output index and the anchor grid is the
/// input; for transposed conv the base is an input index and the anchor
/// grid is the output.
#[inline]
fn scatter_kernel(
    d: usize,
    k: usize,
    s: usize,
    p: isize,
    base: &[usize; 3],
    anchor_ext: &[usize],
    mut visit: impl FnMut(usize, usize),
) {
    match d {
        2 => {
            for k0 in 0..k {
                let a0 = (base[0] * s + k0) as isize - p;
                if a0 < 0 || a0 >= anchor_ext[0] as isize {
                    continue;
                }
                for k1 in 0..k {
                    let a1 = (base[1] * s + k1) as isize - p;
                    if a1 >= 0 && a1 < anchor_ext[1] as isize {
                        visit(a0 as usize * anchor_ext[1] + a1 as usize, k0 * k + k1);
                    }
                }
            }
        }
        3 => {
            for k0 in 0..k {
                let a0 = (base[0] * s + k0) as isize - p;
                if a0 < 0 || a0 >= anchor_ext[0] as isize {
                    continue;
                }
                for k1 in 0..k {
                    let a1 = (base[1] * s + k1) as isize - p;
                    if a1 < 0 || a1 >= anchor_ext[1] as isize {
                        continue;
                    }
                    let row = (a0 as usize * anchor_ext[1] + a1 as usize) * anchor_ext[2];
                    for k2 in 0..k {
                        let a2 = (base[2] * s + k2) as isize - p;
                        if a2 >= 0 && a2 < anchor_ext[2] as isize {
                            visit(row + a2 as usize, (k0 * k + k1) * k + k2);
                        }
                    }
                }
            }
        }
        d => unreachable!("unsupported dims {d}"),
    }
}
