# -*- coding: utf-8 -*-

import os
import shutil
import tempfile
import time
import unittest

from perchs.Exceptions import QueueError, QueueLockError
from perchs.JobQueue import JobQueue, LOCKED_SUFFIX

__all__ = ['TestJobQueue']


class TestQueue(unittest.TestCase):

    def setUp(self):
        self.tempdir = tempfile.mkdtemp(prefix='perchs-queue')
        self.qdir = self.tempdir + '/jobs'

    def tearDown(self):
        shutil.rmtree(self.tempdir, ignore_errors=True)


class TestJobQueue(TestQueue):

    def test01_init(self):
        'JobQueue.__init__()'
        path = self.tempdir + '/aaa/bbb/ccc'
        queue = JobQueue(path, granularity=30)
        self.assertEqual(queue.path, path)
        self.assertEqual(queue.granularity, 30)
        self.assertTrue(os.path.isdir(path))
        self.assertRaises(TypeError, JobQueue, 42)
        self.assertRaises(TypeError, JobQueue, path, granularity='1')

    def test02_add(self):
        'JobQueue.add()'
        queue = JobQueue(self.qdir)
        name = queue.add({'index': 0, 'epsilon': 0.25, 'seed': 1})
        subdirs = os.listdir(self.qdir)
        self.assertEqual(len(subdirs), 1)
        self.assertEqual(name.split('/')[0], subdirs[0])
        text = open(self.qdir + '/' + name).read()
        self.assertEqual(text, '{"epsilon": 0.25, "index": 0, "seed": 1}')

    def test03_lock_unlock(self):
        'JobQueue.lock() / unlock()'
        queue = JobQueue(self.qdir)
        name = queue.add({'index': 0})
        self.assertTrue(queue.lock(name))
        self.assertTrue(os.path.exists(self.qdir + '/' + name +
                                       LOCKED_SUFFIX))
        # a job goes to one consumer only
        self.assertFalse(queue.lock(name))
        self.assertRaises(QueueLockError, queue.lock, name, permissive=False)
        self.assertTrue(queue.unlock(name))
        self.assertFalse(queue.unlock(name, permissive=True))
        self.assertRaises(QueueLockError, queue.unlock, name)

    def test04_get(self):
        'JobQueue.get()'
        queue = JobQueue(self.qdir)
        job = {'index': 3, 'epsilon': 0.125, 'seed': 7}
        name = queue.add(job)
        self.assertRaises(QueueError, queue.get, name)
        queue.lock(name)
        self.assertEqual(queue.get(name), job)

    def test05_count(self):
        'JobQueue.count()'
        queue = JobQueue(self.qdir)
        queue.add({'index': 0})
        # a file that is not an element
        fake = os.listdir(self.qdir)[0] + '/' + 'foo.bar'
        open(self.qdir + '/' + fake, 'w').write('')
        self.assertEqual(queue.count(), 1)

    def test06_remove(self):
        'JobQueue.remove()'
        queue = JobQueue(self.qdir, granularity=1)
        for index in range(5):
            queue.add({'index': index})
        self.assertEqual(queue.count(), 5)
        seen = []
        for name in queue:
            queue.lock(name)
            seen.append(queue.get(name)['index'])
            queue.remove(name)
        self.assertEqual(sorted(seen), list(range(5)))
        self.assertEqual(queue.count(), 0)

    def test07_first_next(self):
        'JobQueue.first() / next()'
        queue = JobQueue(self.qdir)
        self.assertEqual(queue.first(), '')
        names = [queue.add({'index': index}) for index in range(3)]
        self.assertEqual(sorted(names), names)
        self.assertEqual(queue.first(), names[0])
        self.assertEqual(queue.next(), names[1])
        self.assertEqual(queue.next(), names[2])
        self.assertEqual(queue.next(), '')

    def test08_purge_stale_lock(self):
        'JobQueue.purge() stale locks'
        queue = JobQueue(self.qdir)
        queue.add({'index': 0})
        name = queue.first()
        queue.lock(name)
        lock_path = self.qdir + '/' + name + LOCKED_SUFFIX
        self.assertTrue(os.path.exists(lock_path))
        time.sleep(2)
        queue.purge(maxlock=1)
        self.assertFalse(os.path.exists(lock_path))
        self.assertEqual(queue.count(), 1)
        # the job can be picked up again
        self.assertTrue(queue.lock(name))

    def test09_purge_directories(self):
        'JobQueue.purge() empty directories'
        queue = JobQueue(self.qdir, granularity=1)
        first = queue.add({'index': 0})
        time.sleep(2)
        queue.add({'index': 1})
        self.assertEqual(len(os.listdir(self.qdir)), 2)
        queue.lock(first)
        queue.remove(first)
        queue.purge()
        self.assertEqual(len(os.listdir(self.qdir)), 1)
        self.assertEqual(queue.count(), 1)


def main():
    testcases = [TestJobQueue]
    for tc in testcases:
        unittest.TextTestRunner(verbosity=2).\
            run(unittest.TestLoader().loadTestsFromTestCase(tc))


if __name__ == "__main__":
    main()
