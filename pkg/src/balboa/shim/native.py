"""Building the preload library and launching programs under it."""

from __future__ import annotations

import hashlib
import os
import shutil
import subprocess
import sysconfig
import tempfile
from pathlib import Path

from .config import ENV_CONFIG
from .keylog import ENV_KEYLOG, make_fifo

SOURCE = Path(__file__).with_name("preload.c")
ENV_CACHE = "BALBOA_CACHE_DIR"
ENV_LIBPYTHON = "BALBOA_LIBPYTHON"


class BuildError(RuntimeError):
    pass


def _cache_dir():
    base = os.environ.get(ENV_CACHE) or os.path.join(
        os.environ.get("XDG_CACHE_HOME") or os.path.expanduser("~/.cache"), "balboa")
    os.makedirs(base, exist_ok=True)
    return base


def library_path(rebuild=False):
    """Path to the compiled preload library, compiling it on first use."""
    source = SOURCE.read_bytes()
    digest = hashlib.sha256(source).hexdigest()[:16]
    target = os.path.join(_cache_dir(), f"libbalboa-{digest}.so")
    if os.path.exists(target) and not rebuild:
        return target
    cc = os.environ.get("CC") or shutil.which("cc") or shutil.which("gcc")
    if not cc:
        raise BuildError("no C compiler found (set CC)")
    fd, tmp = tempfile.mkstemp(suffix=".so", dir=os.path.dirname(target))
    os.close(fd)
    cmd = [cc, "-shared", "-fPIC", "-O2", "-Wall", "-o", tmp, str(SOURCE), "-ldl", "-lpthread"]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        os.unlink(tmp)
        raise BuildError(proc.stderr.strip())
    os.replace(tmp, target)
    return target


def libpython():
    name = sysconfig.get_config_var("INSTSONAME") or sysconfig.get_config_var("LDLIBRARY")
    libdir = sysconfig.get_config_var("LIBDIR") or ""
    full = os.path.join(libdir, name) if name else ""
    return full if full and os.path.exists(full) else name


def launch_env(config_path, base=None, keylog_fifo=None, library=None):
    """Environment for a child running under the shim.

    Creates the key-log FIFO unless one is given.  The preload library is
    prepended to any existing LD_PRELOAD list.
    """
    env = dict(os.environ if base is None else base)
    library = library or library_path()
    preload = env.get("LD_PRELOAD")
    env["LD_PRELOAD"] = f"{library}:{preload}" if preload else library
    env[ENV_CONFIG] = os.path.abspath(config_path)
    env[ENV_KEYLOG] = keylog_fifo or make_fifo()
    env.pop("BALBOA_KEYLOG_FD", None)
    src = str(Path(__file__).resolve().parents[2])
    env["PYTHONPATH"] = os.pathsep.join(p for p in (src, env.get("PYTHONPATH")) if p)
    env.setdefault(ENV_LIBPYTHON, libpython())
    return env


def run(config_path, argv, **popen_kwargs):
    """Run ``argv`` under the shim and wait; returns its exit status."""
    env = launch_env(config_path)
    try:
        return subprocess.run(argv, env=env, **popen_kwargs).returncode
    finally:
        fifo = env[ENV_KEYLOG]
        try:
            os.unlink(fifo)
            os.rmdir(os.path.dirname(fifo))
        except OSError:
            pass


def popen(config_path, argv, **kwargs):
    """Start ``argv`` under the shim without waiting."""
    return subprocess.Popen(argv, env=launch_env(config_path), **kwargs)
