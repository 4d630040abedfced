#!/usr/bin/env python3
"""Writes amrex_like.darshan.txt, a darshan-parser style text dump.

The layout follows darshan-parser 3.4 output: a commented job header, the
mount table, then tab separated record lines. Values are hand-picked to model
an 8 process AMReX plotfile run on a Lustre scratch file system.
"""

import sys

POSIX_BINS = ["0_100", "100_1K", "1K_10K", "10K_100K", "100K_1M",
              "1M_4M", "4M_10M", "10M_100M", "100M_1G", "1G_PLUS"]

HEADER = """# darshan log version: 3.41
# compression method: ZLIB
# exe: /global/homes/u/user/amrex/Exec/main3d.gnu.MPI.ex inputs.3d
# uid: 40127
# jobid: 27415531
# start_time: 1717010000
# start_time_asci: Wed May 29 19:13:20 2024
# end_time: 1717010722
# end_time_asci: Wed May 29 19:25:22 2024
# nprocs: 8
# run time: 722.0000
# metadata: lib_ver = 3.4.4
# metadata: h = romio_no_indep_rw=true;cb_nodes=4

# log file regions
# -------------------------------------------------------
# header: 360 bytes (uncompressed)
# job data: 311 bytes (compressed)
# record table: 1202 bytes (compressed)
# POSIX module: 3174 bytes (compressed), ver=4
# MPI-IO module: 512 bytes (compressed), ver=3
# STDIO module: 71 bytes (compressed), ver=2
# LUSTRE module: 284 bytes (compressed), ver=1
# HEATMAP module: 96 bytes (compressed), ver=1

# mounted file systems (mount point and fs type)
# -------------------------------------------------------
# mount entry:\t/scratch\tlustre
# mount entry:\t/global/homes\tgpfs
# mount entry:\t/\trootfs

# description of columns:
#   <module>: module responsible for this I/O record.
#   <rank>: MPI rank.  -1 indicates that the file is shared
#      across all processes and statistics are aggregated.
#   <record id>: hash of the record's file path
#   <counter name> and <counter value>: statistical counters.
#   <file name>: full file path for the record.
#   <mount pt>: mount point that the file resides on.
#   <fs type>: type of file system that the file resides on.
"""


def posix_counters(c):
    """Returns the ordered POSIX counter list for one record."""
    out = []
    for name in ["OPENS", "FILENOS", "DUPS", "READS", "WRITES", "SEEKS",
                 "STATS", "MMAPS", "FSYNCS", "FDSYNCS", "RENAME_SOURCES",
                 "RENAME_TARGETS", "RENAMED_FROM", "MODE", "BYTES_READ",
                 "BYTES_WRITTEN", "MAX_BYTE_READ", "MAX_BYTE_WRITTEN",
                 "CONSEC_READS", "CONSEC_WRITES", "SEQ_READS", "SEQ_WRITES",
                 "RW_SWITCHES", "MEM_NOT_ALIGNED", "MEM_ALIGNMENT",
                 "FILE_NOT_ALIGNED", "FILE_ALIGNMENT",
                 "MAX_READ_TIME_SIZE", "MAX_WRITE_TIME_SIZE"]:
        out.append(("POSIX_" + name, c.get(name, 0)))
    for b in POSIX_BINS:
        out.append(("POSIX_SIZE_READ_" + b, c.get("SR_" + b, 0)))
    for b in POSIX_BINS:
        out.append(("POSIX_SIZE_WRITE_" + b, c.get("SW_" + b, 0)))
    for kind in ["STRIDE", "ACCESS"]:
        for i in range(1, 5):
            out.append((f"POSIX_{kind}{i}_{kind}", c.get(f"{kind}{i}", 0)))
        for i in range(1, 5):
            out.append((f"POSIX_{kind}{i}_COUNT", c.get(f"{kind}{i}_COUNT", 0)))
    for name in ["FASTEST_RANK", "FASTEST_RANK_BYTES", "SLOWEST_RANK",
                 "SLOWEST_RANK_BYTES"]:
        out.append(("POSIX_" + name, c.get(name, 0)))
    for name in ["OPEN_START_TIMESTAMP", "READ_START_TIMESTAMP",
                 "WRITE_START_TIMESTAMP", "CLOSE_START_TIMESTAMP",
                 "OPEN_END_TIMESTAMP", "READ_END_TIMESTAMP",
                 "WRITE_END_TIMESTAMP", "CLOSE_END_TIMESTAMP", "READ_TIME",
                 "WRITE_TIME", "META_TIME", "MAX_READ_TIME", "MAX_WRITE_TIME",
                 "FASTEST_RANK_TIME", "SLOWEST_RANK_TIME",
                 "VARIANCE_RANK_TIME", "VARIANCE_RANK_BYTES"]:
        out.append(("POSIX_F_" + name, float(c.get("F_" + name, 0.0))))
    return out


def fmt(v):
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def main(path):
    lines = [HEADER]
    lines.append("# *******************************************************")
    lines.append("# POSIX module data")
    lines.append("# *******************************************************")
    lines.append("")
    lines.append("#<module>\t<rank>\t<record id>\t<counter>\t<value>\t<file name>\t<mount pt>\t<fs type>")

    records = []
    # Eight per-rank level data files: 6144 writes of 256 KiB each.
    for r in range(8):
        c = dict(OPENS=1, WRITES=6144, SEEKS=6144, STATS=1, FSYNCS=0, MODE=420,
                 BYTES_WRITTEN=6144 * 262144, MAX_BYTE_WRITTEN=6144 * 262144 - 1,
                 CONSEC_WRITES=6143, SEQ_WRITES=6143, MEM_NOT_ALIGNED=0,
                 MEM_ALIGNMENT=8, FILE_NOT_ALIGNED=6144, FILE_ALIGNMENT=1048576,
                 MAX_WRITE_TIME_SIZE=262144, SW_100K_1M=6144,
                 ACCESS1=262144, ACCESS1_COUNT=6144, FASTEST_RANK=r,
                 FASTEST_RANK_BYTES=6144 * 262144, SLOWEST_RANK=r,
                 SLOWEST_RANK_BYTES=6144 * 262144,
                 F_OPEN_START_TIMESTAMP=12.5 + r, F_WRITE_START_TIMESTAMP=13.0 + r,
                 F_CLOSE_START_TIMESTAMP=640.25 + r, F_OPEN_END_TIMESTAMP=12.75 + r,
                 F_WRITE_END_TIMESTAMP=640.0 + r, F_CLOSE_END_TIMESTAMP=640.5 + r,
                 F_WRITE_TIME=55.125 + 2 * r, F_META_TIME=0.75,
                 F_MAX_WRITE_TIME=0.5, F_FASTEST_RANK_TIME=55.875 + 2 * r,
                 F_SLOWEST_RANK_TIME=55.875 + 2 * r)
        records.append(("POSIX", r, 1000000000000000001 + r,
                        f"/scratch/u/amrex/plt00000/Level_0/Cell_D_{r:05d}", "/scratch", "lustre", c))
    # Shared plotfile header written by rank 0 but opened by everyone.
    records.append(("POSIX", -1, 7293015829341207733, "/scratch/u/amrex/plt00000/Header",
                    "/scratch", "lustre",
                    dict(OPENS=8, WRITES=64, STATS=16, SEEKS=0, MODE=420,
                         BYTES_WRITTEN=5120, MAX_BYTE_WRITTEN=5119, CONSEC_WRITES=63,
                         SEQ_WRITES=63, MEM_ALIGNMENT=8, FILE_NOT_ALIGNED=64,
                         FILE_ALIGNMENT=1048576, MAX_WRITE_TIME_SIZE=80, SW_0_100=64,
                         ACCESS1=80, ACCESS1_COUNT=64, FASTEST_RANK=3, FASTEST_RANK_BYTES=0,
                         SLOWEST_RANK=0, SLOWEST_RANK_BYTES=5120,
                         F_OPEN_START_TIMESTAMP=641.0, F_WRITE_START_TIMESTAMP=641.5,
                         F_CLOSE_START_TIMESTAMP=642.0, F_OPEN_END_TIMESTAMP=641.25,
                         F_WRITE_END_TIMESTAMP=641.75, F_CLOSE_END_TIMESTAMP=642.25,
                         F_WRITE_TIME=0.25, F_META_TIME=6.5, F_MAX_WRITE_TIME=0.125,
                         F_FASTEST_RANK_TIME=0.5, F_SLOWEST_RANK_TIME=1.5,
                         F_VARIANCE_RANK_TIME=0.1875, F_VARIANCE_RANK_BYTES=3276800.0)))
    # Shared input deck on the home file system read by all ranks.
    records.append(("POSIX", -1, 5550132215849392771, "/global/homes/u/user/amrex/Exec/inputs.3d",
                    "/global/homes", "gpfs",
                    dict(OPENS=8, READS=96, SEEKS=8, STATS=8, MODE=420, BYTES_READ=4608,
                         MAX_BYTE_READ=575, CONSEC_READS=88, SEQ_READS=88,
                         MEM_ALIGNMENT=8, FILE_NOT_ALIGNED=96, FILE_ALIGNMENT=4096,
                         MAX_READ_TIME_SIZE=48, SR_0_100=96, ACCESS1=48, ACCESS1_COUNT=96,
                         FASTEST_RANK=5, FASTEST_RANK_BYTES=576, SLOWEST_RANK=1,
                         SLOWEST_RANK_BYTES=576, F_OPEN_START_TIMESTAMP=0.5,
                         F_READ_START_TIMESTAMP=0.75, F_CLOSE_START_TIMESTAMP=1.25,
                         F_OPEN_END_TIMESTAMP=0.625, F_READ_END_TIMESTAMP=1.0,
                         F_CLOSE_END_TIMESTAMP=1.5, F_READ_TIME=0.5, F_META_TIME=2.5,
                         F_MAX_READ_TIME=0.0625, F_FASTEST_RANK_TIME=0.25,
                         F_SLOWEST_RANK_TIME=0.5, F_VARIANCE_RANK_TIME=0.0078125)))
    # Shared checkpoint file written through MPI-IO (independent ops only).
    records.append(("POSIX", -1, 3141592653589793238, "/scratch/u/amrex/chk00000/Level_0/Cell_D",
                    "/scratch", "lustre",
                    dict(OPENS=8, WRITES=512, READS=0, SEEKS=512, STATS=8, MODE=420,
                         BYTES_WRITTEN=2147483648, MAX_BYTE_WRITTEN=2147483647,
                         CONSEC_WRITES=448, SEQ_WRITES=480, RW_SWITCHES=0,
                         MEM_ALIGNMENT=8, FILE_NOT_ALIGNED=0, FILE_ALIGNMENT=1048576,
                         MAX_WRITE_TIME_SIZE=4194304, SW_4M_10M=512,
                         STRIDE1=4194304, STRIDE1_COUNT=448, STRIDE2=29360128, STRIDE2_COUNT=32,
                         ACCESS1=4194304, ACCESS1_COUNT=512, FASTEST_RANK=6,
                         FASTEST_RANK_BYTES=268435456, SLOWEST_RANK=2,
                         SLOWEST_RANK_BYTES=268435456, F_OPEN_START_TIMESTAMP=650.0,
                         F_WRITE_START_TIMESTAMP=650.5, F_CLOSE_START_TIMESTAMP=700.0,
                         F_OPEN_END_TIMESTAMP=650.25, F_WRITE_END_TIMESTAMP=699.5,
                         F_CLOSE_END_TIMESTAMP=700.5, F_WRITE_TIME=310.5, F_META_TIME=12.0,
                         F_MAX_WRITE_TIME=1.25, F_FASTEST_RANK_TIME=36.25,
                         F_SLOWEST_RANK_TIME=44.75, F_VARIANCE_RANK_TIME=7.5625,
                         F_VARIANCE_RANK_BYTES=0.0)))

    lustre = []
    osts = [3, 3, 7, 9, 12, 15, 21, 27, 31, 40]
    scratch = [r for r in records if r[4] == "/scratch"]
    for i, rec in enumerate(scratch):
        lustre.append(("LUSTRE", rec[1], rec[2], rec[3], rec[4], rec[5],
                       [("LUSTRE_OSTS", 248), ("LUSTRE_MDTS", 1),
                        ("LUSTRE_STRIPE_OFFSET", osts[i]),
                        ("LUSTRE_STRIPE_SIZE", 1048576), ("LUSTRE_STRIPE_WIDTH", 1),
                        ("LUSTRE_OST_ID_0", osts[i])]))

    for module, rank, rid, fname, mnt, fs, c in records:
        for name, value in posix_counters(c):
            lines.append(f"{module}\t{rank}\t{rid}\t{name}\t{fmt(value)}\t{fname}\t{mnt}\t{fs}")

    lines.append("")
    lines.append("# *******************************************************")
    lines.append("# MPI-IO module data")
    lines.append("# *******************************************************")
    lines.append("")
    mpi = [("MPIIO_INDEP_OPENS", 8), ("MPIIO_COLL_OPENS", 0), ("MPIIO_INDEP_READS", 0),
           ("MPIIO_INDEP_WRITES", 512), ("MPIIO_COLL_READS", 0), ("MPIIO_COLL_WRITES", 0),
           ("MPIIO_SPLIT_READS", 0), ("MPIIO_SPLIT_WRITES", 0), ("MPIIO_NB_READS", 0),
           ("MPIIO_NB_WRITES", 0), ("MPIIO_SYNCS", 0), ("MPIIO_HINTS", 8),
           ("MPIIO_VIEWS", 8), ("MPIIO_MODE", 9), ("MPIIO_BYTES_READ", 0),
           ("MPIIO_BYTES_WRITTEN", 2147483648), ("MPIIO_RW_SWITCHES", 0),
           ("MPIIO_MAX_READ_TIME_SIZE", 0), ("MPIIO_MAX_WRITE_TIME_SIZE", 4194304)]
    for b in POSIX_BINS:
        mpi.append(("MPIIO_SIZE_READ_AGG_" + b, 0))
    for b in POSIX_BINS:
        mpi.append(("MPIIO_SIZE_WRITE_AGG_" + b, 512 if b == "4M_10M" else 0))
    mpi += [("MPIIO_ACCESS1_ACCESS", 4194304), ("MPIIO_ACCESS2_ACCESS", 0),
            ("MPIIO_ACCESS3_ACCESS", 0), ("MPIIO_ACCESS4_ACCESS", 0),
            ("MPIIO_ACCESS1_COUNT", 512), ("MPIIO_ACCESS2_COUNT", 0),
            ("MPIIO_ACCESS3_COUNT", 0), ("MPIIO_ACCESS4_COUNT", 0),
            ("MPIIO_FASTEST_RANK", 6), ("MPIIO_FASTEST_RANK_BYTES", 268435456),
            ("MPIIO_SLOWEST_RANK", 2), ("MPIIO_SLOWEST_RANK_BYTES", 268435456),
            ("MPIIO_F_OPEN_START_TIMESTAMP", 650.0), ("MPIIO_F_READ_START_TIMESTAMP", 0.0),
            ("MPIIO_F_WRITE_START_TIMESTAMP", 650.5), ("MPIIO_F_CLOSE_START_TIMESTAMP", 700.0),
            ("MPIIO_F_OPEN_END_TIMESTAMP", 650.25), ("MPIIO_F_READ_END_TIMESTAMP", 0.0),
            ("MPIIO_F_WRITE_END_TIMESTAMP", 699.5), ("MPIIO_F_CLOSE_END_TIMESTAMP", 700.5),
            ("MPIIO_F_READ_TIME", 0.0), ("MPIIO_F_WRITE_TIME", 318.0),
            ("MPIIO_F_META_TIME", 12.5), ("MPIIO_F_MAX_READ_TIME", 0.0),
            ("MPIIO_F_MAX_WRITE_TIME", 1.375), ("MPIIO_F_FASTEST_RANK_TIME", 37.0),
            ("MPIIO_F_SLOWEST_RANK_TIME", 45.5), ("MPIIO_F_VARIANCE_RANK_TIME", 7.5625),
            ("MPIIO_F_VARIANCE_RANK_BYTES", 0.0)]
    for name, value in mpi:
        lines.append(f"MPI-IO\t-1\t3141592653589793238\t{name}\t{fmt(value)}\t"
                     "/scratch/u/amrex/chk00000/Level_0/Cell_D\t/scratch\tlustre")

    lines.append("")
    lines.append("# *******************************************************")
    lines.append("# STDIO module data")
    lines.append("# *******************************************************")
    lines.append("")
    stdio_names = ["OPENS", "FDOPENS", "READS", "WRITES", "SEEKS", "FLUSHES",
                   "BYTES_WRITTEN", "BYTES_READ", "MAX_BYTE_READ", "MAX_BYTE_WRITTEN",
                   "FASTEST_RANK", "FASTEST_RANK_BYTES", "SLOWEST_RANK",
                   "SLOWEST_RANK_BYTES"]
    stdio_f = ["META_TIME", "WRITE_TIME", "READ_TIME", "OPEN_START_TIMESTAMP",
               "CLOSE_START_TIMESTAMP", "WRITE_START_TIMESTAMP",
               "READ_START_TIMESTAMP", "OPEN_END_TIMESTAMP", "CLOSE_END_TIMESTAMP",
               "WRITE_END_TIMESTAMP", "READ_END_TIMESTAMP", "FASTEST_RANK_TIME",
               "SLOWEST_RANK_TIME", "VARIANCE_RANK_TIME", "VARIANCE_RANK_BYTES"]
    stdio_recs = [
        (0, 9221120237041090561, "<STDOUT>", "UNKNOWN", "UNKNOWN",
         dict(OPENS=1, WRITES=1400, BYTES_WRITTEN=98000, MAX_BYTE_WRITTEN=97999,
              FASTEST_RANK=0, SLOWEST_RANK=0, F_WRITE_TIME=0.375, F_META_TIME=0.0)),
        (0, 6614420190135432203, "/global/homes/u/user/amrex/Exec/probin", "/global/homes", "gpfs",
         dict(OPENS=1, READS=12, BYTES_READ=1536, MAX_BYTE_READ=1535, FASTEST_RANK=0,
              SLOWEST_RANK=0, F_READ_TIME=0.0625, F_META_TIME=0.125)),
    ]
    for rank, rid, fname, mnt, fs, c in stdio_recs:
        for name in stdio_names:
            lines.append(f"STDIO\t{rank}\t{rid}\tSTDIO_{name}\t{c.get(name, 0)}\t{fname}\t{mnt}\t{fs}")
        for name in stdio_f:
            lines.append(f"STDIO\t{rank}\t{rid}\tSTDIO_F_{name}\t{float(c.get('F_' + name, 0.0)):.6f}\t{fname}\t{mnt}\t{fs}")

    lines.append("")
    lines.append("# *******************************************************")
    lines.append("# LUSTRE module data")
    lines.append("# *******************************************************")
    lines.append("")
    for module, rank, rid, fname, mnt, fs, cs in lustre:
        for name, value in cs:
            lines.append(f"{module}\t{rank}\t{rid}\t{name}\t{value}\t{fname}\t{mnt}\t{fs}")

    lines.append("")
    lines.append("# *******************************************************")
    lines.append("# HEATMAP module data")
    lines.append("# *******************************************************")
    lines.append("")
    for name, value in [("HEATMAP_F_BIN_WIDTH_SECONDS", "0.200000"),
                        ("HEATMAP_READ_BIN_0", "4608"), ("HEATMAP_WRITE_BIN_0", "0")]:
        lines.append(f"HEATMAP\t-1\t16592106915301738621\t{name}\t{value}\theatmap:POSIX\tUNKNOWN\tUNKNOWN")

    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "amrex_like.darshan.txt")
