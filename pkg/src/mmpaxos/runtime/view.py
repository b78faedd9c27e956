"""Cluster view files.

A view file is an INI document with an explicit version::

    [cluster]
    version = 3
    matchmaker_epoch = 0
    matchmakers = m1, m2, m3
    acceptors = a1, a2, a3, a4, a5, a6
    replicas = r1, r2, r3
    leaders = l1

    [addresses]
    m1 = 127.0.0.1:7101

Writers never move the version backwards, so readers can adopt any file
whose version is larger than the one they hold.
"""
from __future__ import annotations

import configparser
import logging
import os
from pathlib import Path

from ..discovery import ClusterView

logger = logging.getLogger(__name__)

_LISTS = ("matchmakers", "acceptors", "replicas", "leaders")


class StaleViewError(ValueError):
    """Raised when writing a view older than the one already on disk."""


def _split(text: str) -> tuple:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def parse_address(text: str) -> tuple:
    host, _, port = text.strip().rpartition(":")
    return host, int(port)


def dumps_view(view: ClusterView) -> str:
    cp = configparser.ConfigParser()
    cp["cluster"] = {"version": str(view.version),
                     "matchmaker_epoch": str(view.matchmaker_epoch)}
    for name in _LISTS:
        cp["cluster"][name] = ", ".join(getattr(view, name))
    cp["addresses"] = {nid: f"{host}:{port}"
                       for nid, (host, port) in sorted(view.addresses.items())}
    lines = []
    for section in cp.sections():
        lines.append(f"[{section}]")
        lines += [f"{k} = {v}" for k, v in cp[section].items()]
        lines.append("")
    return "\n".join(lines)


def loads_view(text: str) -> ClusterView:
    cp = configparser.ConfigParser()
    cp.read_string(text)
    c = cp["cluster"]
    view = ClusterView(version=c.getint("version"),
                       matchmaker_epoch=c.getint("matchmaker_epoch", 0),
                       **{name: _split(c.get(name, "")) for name in _LISTS})
    if cp.has_section("addresses"):
        # configparser lower-cases keys; node ids are lower case by convention
        view.addresses = {k: parse_address(v) for k, v in cp["addresses"].items()}
    return view


def load_view(path) -> ClusterView:
    return loads_view(Path(path).read_text())


def save_view(view: ClusterView, path) -> None:
    """Atomically write ``view``; refuses to lower the version on disk."""
    path = Path(path)
    if path.exists():
        current = load_view(path)
        if current.version > view.version:
            raise StaleViewError(f"{path} holds version {current.version} > {view.version}")
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(dumps_view(view))
    os.replace(tmp, path)


class ViewFile:
    """A view backed by a file; ``refresh`` adopts newer versions in place."""

    def __init__(self, path, view: ClusterView | None = None):
        self.path = Path(path)
        self.view = view if view is not None else load_view(self.path)
        self.published_version = self.view.version
        self._mtime = self._stat()

    def _stat(self):
        try:
            return self.path.stat().st_mtime_ns
        except FileNotFoundError:
            return None

    def refresh(self, force: bool = False) -> bool:
        mtime = self._stat()
        if mtime is None or (mtime == self._mtime and not force):
            return False
        self._mtime = mtime
        try:
            newer = load_view(self.path)
        except (OSError, configparser.Error, KeyError, ValueError) as exc:
            logger.warning("cannot read view %s: %s", self.path, exc)
            return False
        changed = self.view.adopt(newer)
        if changed:
            self.published_version = self.view.version
            logger.info("adopted view version %d", self.view.version)
        return changed

    def publish(self) -> None:
        save_view(self.view, self.path)
        self.published_version = self.view.version
        self._mtime = self._stat()
