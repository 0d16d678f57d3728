"""
JobQueue - directory based queue of experiment jobs.

=============
JobQueue class
=============

:py:class:`JobQueue` - queue of JSON job descriptors on the filesystem,
shared by the worker processes of one run.

Usage::

    from perchs.JobQueue import JobQueue

    # producer

    queue = JobQueue('/tmp/run/jobs')
    for index, (eps, seed) in enumerate(plan):
        queue.add({'index': index, 'epsilon': eps, 'seed': seed})

    # consumer

    queue = JobQueue('/tmp/run/jobs')
    for name in queue:
        if not queue.lock(name):
            continue
        job = queue.get(name)
        ...
        queue.remove(name)


Description
-----------

    Any number of processes may add and consume elements concurrently; the
    only synchronization is done with atomic filesystem operations (hard
    links), so no process ever sees a half written job and a job is handed
    to at most one consumer.

Layout
------

    <path>/<bucket>/<element>

    Buckets are named after the insertion time, truncated to the
    granularity, as 8 hex digits. Elements are named after the insertion
    time with microseconds plus one hex digit picked per queue instance
    (14 hex digits in all), so a plain sort lists jobs in insertion order.

    Jobs are written as ``<element>.tmp`` first and hard linked into place;
    a consumer owns a job while the ``<element>.lck`` hard link exists.

License and Copyright
---------------------

ASL 2.0
"""

import errno
import json
import logging
import os
import random
import re
import time

from perchs.Exceptions import QueueError, QueueLockError

LOG = logging.getLogger(__name__)

# element being written
TEMPORARY_SUFFIX = ".tmp"

# hard link held by the consumer of an element
LOCKED_SUFFIX = ".lck"

_DIRECTORY_REGEXP = re.compile('^[0-9a-f]{8}$')
_ELEMENT_REGEXP = re.compile('^[0-9a-f]{14}$')


def _name(rndhex):
    """Element name for the current time: seconds, microseconds and the
    instance digit, in hex."""
    now = time.time()
    secs = int(now)
    msecs = int((now - secs) * 1000000)
    return "%08x%05x%01x" % (secs, msecs, rndhex)


def _special_mkdir(path, umask=None):
    """Create path (and parents); return false if it already exists.

    Raise:
        QueueError - can't make directory
    """
    if umask is not None:
        oldumask = os.umask(umask)
    try:
        os.makedirs(path)
    except OSError as error:
        if error.errno == errno.EEXIST and os.path.isdir(path):
            return False
        raise QueueError("cannot mkdir(%s): %s" % (path, error))
    finally:
        if umask is not None:
            os.umask(oldumask)
    return True


def _special_rmdir(path):
    """Delete a directory; return false if it does not exist (anymore).

    Raise:
        QueueError - can't delete given directory
    """
    try:
        os.rmdir(path)
    except OSError as error:
        if error.errno != errno.ENOENT:
            raise QueueError("cannot rmdir(%s): %s" % (path, error))
        # RACE: this path does not exist (anymore)
        return False
    return True


def _file_create(path, umask=None):
    """Exclusively create a file and return its handle.

    Raise:
        OSError - if file exists
    """
    if umask is not None:
        oldumask = os.umask(umask)
    try:
        return os.fdopen(
            os.open(path, os.O_WRONLY | os.O_CREAT | os.O_EXCL, 438), 'w')
    finally:
        if umask is not None:
            os.umask(oldumask)


class JobQueue(object):
    """
    JobQueue
    """
    def __init__(self, path, umask=None, rndhex=None, granularity=60):
        """
        Arguments:
            path
                the queue toplevel directory
            umask
                the umask to use when creating files and directories
                (default: use the running process' umask)
            rndhex
                the hexadecimal digit to use in names
                (default: randomly chosen)
            granularity
                the time granularity for intermediate directories
                (default: 60)

        Raise:
            TypeError  - wrong input data types provided
            QueueError - can't create directory structure
        """
        if not isinstance(path, str):
            raise TypeError("'path' should be str")
        if umask is not None and not isinstance(umask, int):
            raise TypeError("'umask' should be integer")
        if rndhex is not None and not isinstance(rndhex, int):
            raise TypeError("'rndhex' should be integer")
        if not isinstance(granularity, int):
            raise TypeError("'granularity' should be integer")
        self.path = path
        self.umask = umask
        self.rndhex = random.randint(0, 15) if rndhex is None \
            else rndhex % 16
        self.granularity = granularity
        self.dirs = []
        self.elts = []
        _special_mkdir(path, self.umask)

    def __iter__(self):
        """Return iterator over element names."""
        self._reset()
        return self

    def _reset(self):
        """Regenerate the list of intermediate directories."""
        self.dirs = sorted(name for name in self._listdir(self.path)
                           if _DIRECTORY_REGEXP.match(name))
        self.elts = []

    @staticmethod
    def _listdir(path):
        try:
            return os.listdir(path)
        except OSError as error:
            if error.errno != errno.ENOENT:
                raise QueueError("cannot listdir(%s): %s" % (path, error))
            # RACE: this path does not exist (anymore)
            return []

    def _build_elements(self):
        while self.dirs:
            _dir = self.dirs.pop(0)
            names = sorted(name for name in
                           self._listdir('%s/%s' % (self.path, _dir))
                           if _ELEMENT_REGEXP.match(name))
            if names:
                self.elts = ['%s/%s' % (_dir, x) for x in names]
                return True
        return False

    def __next__(self):
        """Return the name of the next element.

        Raise:
            StopIteration - the queue is exhausted
        """
        if self.elts or self._build_elements():
            return self.elts.pop(0)
        raise StopIteration

    def first(self):
        """Return the first element name, '' when the queue is empty."""
        self._reset()
        return self.next()

    def next(self):
        """Return the next element name from the cached listing, '' when
        exhausted."""
        try:
            return self.__next__()
        except StopIteration:
            return ''

    def _add_dir(self):
        """ Return new directory name based on time and granularity. """
        now = int(time.time())
        if self.granularity > 1:
            now -= now % self.granularity
        return "%08x" % now

    def add(self, job):
        """Add a JSON serializable job descriptor.

        Return: element name (<directory name>/<file name>).
        """
        data = json.dumps(job, sort_keys=True)
        _dir = self._add_dir()
        while True:
            tmp = '%s/%s/%s%s' % (self.path, _dir, _name(self.rndhex),
                                  TEMPORARY_SUFFIX)
            try:
                fileh = _file_create(tmp, umask=self.umask)
            except OSError as error:
                if error.errno == errno.ENOENT:
                    _special_mkdir('%s/%s' % (self.path, _dir), self.umask)
                    continue
                if error.errno == errno.EEXIST:
                    continue
                raise QueueError("cannot create %s: %s" % (tmp, error))
            break
        try:
            fileh.write(data)
        finally:
            fileh.close()
        while True:
            name = '%s/%s' % (_dir, _name(self.rndhex))
            try:
                os.link(tmp, '%s/%s' % (self.path, name))
            except OSError as error:
                if error.errno == errno.EEXIST:
                    continue
                raise QueueError("cannot link(%s): %s" % (tmp, error))
            os.unlink(tmp)
            LOG.debug("queued job %s as %s", data, name)
            return name

    def lock(self, name, permissive=True):
        """Lock an element.

        Return:

        * true on success
        * false in case the element could not be locked (in permissive
          mode)

        Raise:
            QueueLockError - locking failed (not permissive)
        """
        path = '%s/%s' % (self.path, name)
        lock = '%s%s' % (path, LOCKED_SUFFIX)
        try:
            os.link(path, lock)
        except OSError as error:
            if permissive and error.errno in (errno.EEXIST, errno.ENOENT):
                return False
            raise QueueLockError("cannot link(%s, %s): %s" %
                                 (path, lock, error))
        try:
            os.utime(path, None)
        except OSError as error:
            # RACE: the element file does not exist anymore
            if permissive and error.errno == errno.ENOENT:
                os.unlink(lock)
                return False
            raise QueueLockError("cannot utime(%s): %s" % (path, error))
        return True

    def unlock(self, name, permissive=False):
        """Unlock an element.

        Return: true on success, false when the lock was already gone (in
        permissive mode).
        """
        lock = '%s/%s%s' % (self.path, name, LOCKED_SUFFIX)
        try:
            os.unlink(lock)
        except OSError as error:
            if permissive and error.errno == errno.ENOENT:
                return False
            raise QueueLockError("cannot unlink(%s): %s" % (lock, error))
        return True

    def get(self, name):
        """Return the job descriptor of a locked element."""
        path = '%s/%s%s' % (self.path, name, LOCKED_SUFFIX)
        try:
            fileh = open(path)
        except OSError as error:
            raise QueueError("cannot open %s: %s" % (path, error))
        try:
            return json.load(fileh)
        except ValueError as error:
            raise QueueError("corrupt job %s: %s" % (path, error))
        finally:
            fileh.close()

    def remove(self, name):
        """Remove a locked element from the queue."""
        path = '%s/%s' % (self.path, name)
        try:
            os.unlink(path)
            os.unlink('%s%s' % (path, LOCKED_SUFFIX))
        except OSError as error:
            raise QueueError("cannot remove %s: %s" % (path, error))

    def count(self):
        """Return the number of elements, locked or not (but not
        temporary)."""
        count = 0
        for _dir in self._listdir(self.path):
            if not _DIRECTORY_REGEXP.match(_dir):
                continue
            count += len([x for x in
                          self._listdir('%s/%s' % (self.path, _dir))
                          if _ELEMENT_REGEXP.match(x)])
        return count

    def purge(self, maxtemp=300, maxlock=600):
        """Remove empty intermediate directories, too old temporary
        elements and too old locks (stale locks of dead workers).

        maxtemp - maximum age of a temporary element in seconds, 0 keeps
                  them
        maxlock - maximum age of a lock in seconds, 0 keeps them
        """
        dirs = sorted(name for name in self._listdir(self.path)
                      if _DIRECTORY_REGEXP.match(name))
        now = time.time()
        for _dir in dirs:
            path = '%s/%s' % (self.path, _dir)
            for old in self._listdir(path):
                if old.endswith(TEMPORARY_SUFFIX):
                    limit = maxtemp
                elif old.endswith(LOCKED_SUFFIX):
                    limit = maxlock
                else:
                    continue
                if not limit:
                    continue
                try:
                    stat = os.stat('%s/%s' % (path, old))
                except OSError as error:
                    if error.errno == errno.ENOENT:
                        continue
                    raise QueueError("cannot stat %s/%s: %s" %
                                     (path, old, error))
                if stat.st_mtime >= now - limit:
                    continue
                LOG.warning("removing too old volatile file: %s/%s",
                            path, old)
                try:
                    os.unlink('%s/%s' % (path, old))
                except OSError as error:
                    if error.errno != errno.ENOENT:
                        raise QueueError("cannot unlink %s/%s: %s" %
                                         (path, old, error))
        # keep the last intermediate directory, new elements may land there
        for _dir in dirs[:-1]:
            path = '%s/%s' % (self.path, _dir)
            if not self._listdir(path):
                _special_rmdir(path)
