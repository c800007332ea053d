# MPS reader/writer for LPProblem
#
# Supported sections: NAME, ROWS (N/L/G/E), COLUMNS, RHS, RANGES,
# BOUNDS (LO/UP/FX/FR/MI/PL), ENDATA.  Integer MARKER lines are skipped so the
# continuous relaxation is read.  Free format splits on whitespace; fixed
# format reads the classic column fields so names may contain spaces.

import io
import logging
import os

import numpy
import scipy.sparse

from .Errors import MPSFormatError
from .LPProblem import INF, LPProblem

__all__ = ['read_mps', 'write_mps', 'mps_string']

logger = logging.getLogger(__name__)

SECTIONS = ('NAME', 'ROWS', 'COLUMNS', 'RHS', 'RANGES', 'BOUNDS', 'ENDATA')
UNSUPPORTED = ('SOS', 'QUADOBJ', 'QMATRIX', 'QSECTION', 'QCMATRIX', 'OBJSENSE', 'OBJSENSE MAX')

# 1-based field columns of fixed MPS: 2-3, 5-12, 15-22, 25-36, 40-47, 50-61
FIXED_FIELDS = ((1, 3), (4, 12), (14, 22), (24, 36), (39, 47), (49, 61))


def _fields(line, fixed):
    if not fixed:
        return line.split()
    out = []
    for start, stop in FIXED_FIELDS:
        chunk = line[start:stop].strip()
        if chunk:
            out.append(chunk)
        elif start >= 14 and out:
            # keep positional alignment for the name/value pairs
            out.append('')
    while out and out[-1] == '':
        out.pop()
    return out


def _number(token, lineno):
    try:
        return float(token)
    except ValueError:
        raise MPSFormatError("expected a number, got {0!r}".format(token), lineno)


def read_mps(source, fixed=False):
    """Read an MPS file (path or text) into an LPProblem."""
    if isinstance(source, str) and '\n' not in source and os.path.exists(source):
        with open(source, 'r') as reader:
            text = reader.read()
    else:
        text = source

    name = ''
    section = None
    objective = None
    row_index = {}
    row_types = []
    row_names = []
    col_index = {}
    col_names = []
    obj = []
    entries = {}
    rhs = {}
    ranges = {}
    lower = {}
    upper = {}
    lower_set = set()
    obj_offset = 0.0

    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.rstrip('\n')
        if not line.strip() or line.lstrip().startswith('*'):
            continue
        if not line[0].isspace():
            head = line.split()
            keyword = head[0].upper()
            if keyword in UNSUPPORTED or keyword.startswith('OBJSENSE'):
                raise MPSFormatError("unsupported section {0}".format(keyword), lineno)
            if keyword not in SECTIONS:
                raise MPSFormatError("unknown section {0!r}".format(head[0]), lineno)
            section = keyword
            if keyword == 'NAME':
                name = line[4:].strip() if fixed else ' '.join(head[1:])
            if keyword == 'ENDATA':
                break
            continue

        f = _fields(line, fixed)
        if section == 'ROWS':
            if len(f) < 2:
                raise MPSFormatError("malformed ROWS entry", lineno)
            kind, rname = f[0].upper(), f[1]
            if kind == 'N' and objective is None:
                objective = rname
                continue
            if kind not in ('N', 'L', 'G', 'E'):
                raise MPSFormatError("unknown row type {0!r}".format(kind), lineno)
            if rname in row_index:
                raise MPSFormatError("duplicate row {0!r}".format(rname), lineno)
            row_index[rname] = len(row_names)
            row_names.append(rname)
            row_types.append(kind)
        elif section == 'COLUMNS':
            if len(f) > 2 and f[1].strip("'").upper() == 'MARKER':
                logger.warning("MPS line %d: integer marker ignored, reading the relaxation", lineno)
                continue
            if len(f) < 3 or len(f) % 2 == 0:
                raise MPSFormatError("malformed COLUMNS entry", lineno)
            cname = f[0]
            if cname not in col_index:
                col_index[cname] = len(col_names)
                col_names.append(cname)
                obj.append(0.0)
            j = col_index[cname]
            for rname, value in zip(f[1::2], f[2::2]):
                v = _number(value, lineno)
                if rname == objective:
                    obj[j] += v
                elif rname in row_index:
                    key = (row_index[rname], j)
                    entries[key] = entries.get(key, 0.0) + v
                else:
                    raise MPSFormatError("unknown row {0!r}".format(rname), lineno)
        elif section in ('RHS', 'RANGES'):
            # the set name is optional in free format
            pairs = f[1:] if len(f) % 2 == 1 else f
            target = rhs if section == 'RHS' else ranges
            for rname, value in zip(pairs[0::2], pairs[1::2]):
                v = _number(value, lineno)
                if rname == objective:
                    if section == 'RHS':
                        obj_offset = -v
                    continue
                if rname not in row_index:
                    raise MPSFormatError("unknown row {0!r}".format(rname), lineno)
                target[row_index[rname]] = v
        elif section == 'BOUNDS':
            if len(f) < 2:
                raise MPSFormatError("malformed BOUNDS entry", lineno)
            kind = f[0].upper()
            if kind in ('FR', 'MI', 'PL'):
                cname = f[2] if len(f) >= 3 else f[1]
                value = None
            else:
                if len(f) == 4:
                    cname, value = f[2], _number(f[3], lineno)
                elif len(f) == 3:
                    cname, value = f[1], _number(f[2], lineno)
                else:
                    raise MPSFormatError("malformed BOUNDS entry", lineno)
            if cname not in col_index:
                raise MPSFormatError("unknown column {0!r}".format(cname), lineno)
            j = col_index[cname]
            if kind == 'LO':
                lower[j] = value
                lower_set.add(j)
            elif kind == 'UP':
                upper[j] = value
                if value < 0 and j not in lower_set and lower.get(j, 0.0) == 0.0:
                    logger.warning("MPS line %d: negative UP bound on %s sets lower bound to -inf", lineno, cname)
                    lower[j] = -INF
            elif kind == 'FX':
                lower[j] = upper[j] = value
                lower_set.add(j)
            elif kind == 'FR':
                lower[j], upper[j] = -INF, INF
                lower_set.add(j)
            elif kind == 'MI':
                lower[j] = -INF
                lower_set.add(j)
            elif kind == 'PL':
                upper[j] = INF
            else:
                raise MPSFormatError("unsupported bound type {0!r}".format(kind), lineno)
        elif section is None:
            raise MPSFormatError("data before the first section", lineno)

    m, n = len(row_names), len(col_names)
    row_lower = numpy.empty(m)
    row_upper = numpy.empty(m)
    for i, kind in enumerate(row_types):
        b = rhs.get(i, 0.0)
        if kind == 'E':
            lo, hi = b, b
            r = ranges.get(i)
            if r is not None:
                if r >= 0:
                    hi = b + abs(r)
                else:
                    lo = b - abs(r)
        elif kind == 'L':
            lo, hi = -INF, b
            if i in ranges:
                lo = b - abs(ranges[i])
        elif kind == 'G':
            lo, hi = b, INF
            if i in ranges:
                hi = b + abs(ranges[i])
        else:
            lo, hi = -INF, INF
        row_lower[i], row_upper[i] = lo, hi

    col_lower = numpy.array([lower.get(j, 0.0) for j in range(n)], dtype=float)
    col_upper = numpy.array([upper.get(j, INF) for j in range(n)], dtype=float)
    rows = [k[0] for k in entries]
    cols = [k[1] for k in entries]
    matrix = scipy.sparse.coo_matrix((list(entries.values()), (rows, cols)), shape=(m, n))
    lp = LPProblem(obj, col_lower, col_upper, row_lower, row_upper, matrix=matrix,
                   obj_offset=obj_offset, name=name, row_names=row_names, col_names=col_names)
    logger.debug("read MPS %r: %d rows, %d cols, %d nonzeros", name, m, n, lp.nnz())
    return lp


def _fmt(value):
    return repr(float(value))


def mps_string(lp):
    """Free-format MPS text for the live part of lp."""
    rows, cols = lp.rows(), lp.cols()
    out = ['NAME {0}'.format(lp.name or 'LP'), 'ROWS', ' N  OBJ']
    kinds = {}
    rhs = []
    ranges = []
    for i in rows:
        lo, hi = lp.row_lower[i], lp.row_upper[i]
        rname = lp.row_names[i]
        if lo == hi:
            kind, b = 'E', lo
        elif numpy.isinf(lo) and numpy.isinf(hi):
            kind, b = 'N', None
        elif numpy.isinf(lo):
            kind, b = 'L', hi
        elif numpy.isinf(hi):
            kind, b = 'G', lo
        else:
            kind, b = 'L', hi
            ranges.append((rname, hi - lo))
        kinds[i] = kind
        out.append(' {0}  {1}'.format(kind, rname))
        if b is not None and b != 0.0:
            rhs.append((rname, b))
    out.append('COLUMNS')
    for j in cols:
        cname = lp.col_names[j]
        if lp.obj[j] != 0.0 or not lp.col(j):
            out.append('    {0}  OBJ  {1}'.format(cname, _fmt(lp.obj[j])))
        for i in sorted(lp.col(j)):
            out.append('    {0}  {1}  {2}'.format(cname, lp.row_names[i], _fmt(lp.col(j)[i])))
    out.append('RHS')
    if lp.obj_offset != 0.0:
        out.append('    RHS  OBJ  {0}'.format(_fmt(-lp.obj_offset)))
    for rname, b in rhs:
        out.append('    RHS  {0}  {1}'.format(rname, _fmt(b)))
    if ranges:
        out.append('RANGES')
        for rname, r in ranges:
            out.append('    RNG  {0}  {1}'.format(rname, _fmt(r)))
    out.append('BOUNDS')
    for j in cols:
        cname = lp.col_names[j]
        lo, hi = lp.col_lower[j], lp.col_upper[j]
        if lo == hi:
            out.append(' FX BND  {0}  {1}'.format(cname, _fmt(lo)))
            continue
        if numpy.isinf(lo) and numpy.isinf(hi):
            out.append(' FR BND  {0}'.format(cname))
            continue
        if numpy.isinf(lo):
            out.append(' MI BND  {0}'.format(cname))
        elif lo != 0.0:
            out.append(' LO BND  {0}  {1}'.format(cname, _fmt(lo)))
        if not numpy.isinf(hi):
            out.append(' UP BND  {0}  {1}'.format(cname, _fmt(hi)))
    out.append('ENDATA')
    return '\n'.join(out) + '\n'


def write_mps(lp, path):
    with open(path, 'w') as writer:
        writer.write(mps_string(lp))
