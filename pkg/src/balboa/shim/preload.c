/*
 * LD_PRELOAD interposition for the balboa shim.
 *
 * Tracks sockets created by connect()/accept() that the Python side accepts,
 * and routes their data-path calls through balboa.shim.bootstrap.  Untracked
 * descriptors go straight to the real libc routine without touching Python.
 * A thread-local flag sends calls made from inside a hook (logging, the
 * key-log reader, ...) directly to libc as well.
 *
 * The Python C API is resolved at run time: a Python host already exports it,
 * any other host gets libpython loaded and initialized on first use.
 */
#define _GNU_SOURCE
#include <arpa/inet.h>
#include <dlfcn.h>
#include <errno.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <pthread.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <sys/socket.h>
#include <sys/stat.h>
#include <sys/types.h>
#include <sys/uio.h>
#include <unistd.h>

#define MAX_TRACKED 65536

typedef struct _object PyObject;

static int (*py_IsInitialized)(void);
static int (*py_IsFinalizing)(void);
static void (*py_InitializeEx)(int);
static int (*py_GILState_Ensure)(void);
static void (*py_GILState_Release)(int);
static void *(*py_EvalSaveThread)(void);
static PyObject *(*py_ImportModule)(const char *);
static PyObject *(*py_GetAttrString)(PyObject *, const char *);
static PyObject *(*py_CallFunction)(PyObject *, const char *, ...);
static PyObject *(*py_BytesFromStringAndSize)(const char *, ssize_t);
static int (*py_BytesAsStringAndSize)(PyObject *, char **, ssize_t *);
static int (*py_ObjectIsTrue)(PyObject *);
static void (*py_DecRef)(PyObject *);
static void (*py_ErrPrint)(void);
static void (*py_ErrClear)(void);

static PyObject *cb_connect, *cb_accept, *cb_close, *cb_write, *cb_write_done, *cb_read;

static ssize_t (*real_read)(int, void *, size_t);
static ssize_t (*real_write)(int, const void *, size_t);
static ssize_t (*real_recv)(int, void *, size_t, int);
static ssize_t (*real_send)(int, const void *, size_t, int);
static ssize_t (*real_recvfrom)(int, void *, size_t, int, struct sockaddr *, socklen_t *);
static ssize_t (*real_sendto)(int, const void *, size_t, int, const struct sockaddr *, socklen_t);
static ssize_t (*real_readv)(int, const struct iovec *, int);
static ssize_t (*real_writev)(int, const struct iovec *, int);
static ssize_t (*real_recvmsg)(int, struct msghdr *, int);
static ssize_t (*real_sendmsg)(int, const struct msghdr *, int);
static int (*real_connect)(int, const struct sockaddr *, socklen_t);
static int (*real_accept)(int, struct sockaddr *, socklen_t *);
static int (*real_accept4)(int, struct sockaddr *, socklen_t *, int);
static int (*real_close)(int);

static volatile unsigned char tracked[MAX_TRACKED];
static __thread int in_hook;
static pthread_once_t py_once = PTHREAD_ONCE_INIT;
static int py_ready;

static void resolve_real(void)
{
    real_read = dlsym(RTLD_NEXT, "read");
    real_write = dlsym(RTLD_NEXT, "write");
    real_recv = dlsym(RTLD_NEXT, "recv");
    real_send = dlsym(RTLD_NEXT, "send");
    real_recvfrom = dlsym(RTLD_NEXT, "recvfrom");
    real_sendto = dlsym(RTLD_NEXT, "sendto");
    real_readv = dlsym(RTLD_NEXT, "readv");
    real_writev = dlsym(RTLD_NEXT, "writev");
    real_recvmsg = dlsym(RTLD_NEXT, "recvmsg");
    real_sendmsg = dlsym(RTLD_NEXT, "sendmsg");
    real_connect = dlsym(RTLD_NEXT, "connect");
    real_accept = dlsym(RTLD_NEXT, "accept");
    real_accept4 = dlsym(RTLD_NEXT, "accept4");
    real_close = dlsym(RTLD_NEXT, "close");
}

__attribute__((constructor)) static void balboa_preload_init(void)
{
    resolve_real();
    /* Open the key-log FIFO's read end now so a TLS library opening it for
     * writing does not block before the Python reader exists. */
    const char *path = getenv("SSLKEYLOGFILE");
    struct stat st;
    if (path && getenv("BALBOA_CONFIG") && !getenv("BALBOA_KEYLOG_FD")
        && stat(path, &st) == 0 && S_ISFIFO(st.st_mode)) {
        int fd = open(path, O_RDONLY | O_NONBLOCK | O_CLOEXEC);
        if (fd >= 0) {
            char buf[16];
            snprintf(buf, sizeof buf, "%d", fd);
            setenv("BALBOA_KEYLOG_FD", buf, 1);
        }
    }
}

#define RESOLVE(var, name)                                  \
    do {                                                    \
        *(void **)(&var) = dlsym(handle, name);             \
        if (!var)                                           \
            return -1;                                      \
    } while (0)

static int resolve_python(void)
{
    void *handle = RTLD_DEFAULT;
    if (!dlsym(handle, "Py_IsInitialized")) {
        const char *lib = getenv("BALBOA_LIBPYTHON");
        handle = dlopen(lib ? lib : "libpython3.10.so.1.0", RTLD_NOW | RTLD_GLOBAL);
        if (!handle)
            return -1;
    }
    RESOLVE(py_IsInitialized, "Py_IsInitialized");
    RESOLVE(py_InitializeEx, "Py_InitializeEx");
    RESOLVE(py_GILState_Ensure, "PyGILState_Ensure");
    RESOLVE(py_GILState_Release, "PyGILState_Release");
    RESOLVE(py_EvalSaveThread, "PyEval_SaveThread");
    RESOLVE(py_ImportModule, "PyImport_ImportModule");
    RESOLVE(py_GetAttrString, "PyObject_GetAttrString");
    RESOLVE(py_CallFunction, "PyObject_CallFunction");
    RESOLVE(py_BytesFromStringAndSize, "PyBytes_FromStringAndSize");
    RESOLVE(py_BytesAsStringAndSize, "PyBytes_AsStringAndSize");
    RESOLVE(py_ObjectIsTrue, "PyObject_IsTrue");
    RESOLVE(py_DecRef, "Py_DecRef");
    RESOLVE(py_ErrPrint, "PyErr_Print");
    RESOLVE(py_ErrClear, "PyErr_Clear");
    *(void **)(&py_IsFinalizing) = dlsym(handle, "_Py_IsFinalizing");
    return 0;
}

static void init_python(void)
{
    if (resolve_python() < 0)
        return;
    int embedded = 0;
    if (!py_IsInitialized()) {
        py_InitializeEx(0);
        embedded = 1;
    }
    int gil = py_GILState_Ensure();
    PyObject *mod = py_ImportModule("balboa.shim.bootstrap");
    if (mod) {
        cb_connect = py_GetAttrString(mod, "on_connect");
        cb_accept = py_GetAttrString(mod, "on_accept");
        cb_close = py_GetAttrString(mod, "on_close");
        cb_write = py_GetAttrString(mod, "on_write");
        cb_write_done = py_GetAttrString(mod, "on_write_done");
        cb_read = py_GetAttrString(mod, "on_read");
        py_ready = cb_connect && cb_accept && cb_close && cb_write && cb_write_done && cb_read;
    }
    if (!py_ready)
        py_ErrPrint();
    py_GILState_Release(gil);
    if (embedded)
        py_EvalSaveThread();
}

static int python_usable(void)
{
    if (!py_ready || !py_IsInitialized())
        return 0;
    if (py_IsFinalizing && py_IsFinalizing())
        return 0;
    return 1;
}

static int is_tracked(int fd)
{
    return fd >= 0 && fd < MAX_TRACKED && tracked[fd] && !in_hook;
}

/* Internet stream sockets only; returns the port, fills addr text. */
static int inet_endpoint(const struct sockaddr *sa, char *text, size_t len)
{
    if (sa->sa_family == AF_INET) {
        const struct sockaddr_in *in = (const void *)sa;
        inet_ntop(AF_INET, &in->sin_addr, text, len);
        return ntohs(in->sin_port);
    }
    if (sa->sa_family == AF_INET6) {
        const struct sockaddr_in6 *in6 = (const void *)sa;
        inet_ntop(AF_INET6, &in6->sin6_addr, text, len);
        return ntohs(in6->sin6_port);
    }
    return -1;
}

static int is_stream(int fd)
{
    int type = 0;
    socklen_t len = sizeof type;
    return getsockopt(fd, SOL_SOCKET, SO_TYPE, &type, &len) == 0 && type == SOCK_STREAM;
}

static void maybe_track(int fd, const struct sockaddr *sa, PyObject **cb)
{
    char text[INET6_ADDRSTRLEN] = "";
    int port;
    if (fd < 0 || fd >= MAX_TRACKED || in_hook)
        return;
    port = inet_endpoint(sa, text, sizeof text);
    if (port < 0 || !is_stream(fd))
        return;
    in_hook = 1;
    pthread_once(&py_once, init_python);
    if (python_usable()) {
        int gil = py_GILState_Ensure();
        PyObject *r = py_CallFunction(*cb, "isi", fd, text, port);
        if (r) {
            tracked[fd] = py_ObjectIsTrue(r) > 0;
            py_DecRef(r);
        } else {
            py_ErrClear();
        }
        py_GILState_Release(gil);
    }
    in_hook = 0;
}

int connect(int fd, const struct sockaddr *addr, socklen_t len)
{
    int rc = real_connect(fd, addr, len);
    int saved = errno;
    if ((rc == 0 || saved == EINPROGRESS) && addr)
        maybe_track(fd, addr, &cb_connect);
    errno = saved;
    return rc;
}

static void after_accept(int fd)
{
    struct sockaddr_storage local;
    socklen_t len = sizeof local;
    if (fd >= 0 && getsockname(fd, (struct sockaddr *)&local, &len) == 0)
        maybe_track(fd, (struct sockaddr *)&local, &cb_accept);
}

int accept(int fd, struct sockaddr *addr, socklen_t *len)
{
    int rc = real_accept(fd, addr, len);
    int saved = errno;
    after_accept(rc);
    errno = saved;
    return rc;
}

int accept4(int fd, struct sockaddr *addr, socklen_t *len, int flags)
{
    int rc = real_accept4(fd, addr, len, flags);
    int saved = errno;
    after_accept(rc);
    errno = saved;
    return rc;
}

int close(int fd)
{
    if (is_tracked(fd)) {
        tracked[fd] = 0;
        in_hook = 1;
        if (python_usable()) {
            int gil = py_GILState_Ensure();
            PyObject *r = py_CallFunction(cb_close, "i", fd);
            if (r)
                py_DecRef(r);
            else
                py_ErrClear();
            py_GILState_Release(gil);
        }
        in_hook = 0;
    }
    return real_close(fd);
}

/* Incoming: transform ``n`` bytes in place. */
static void transform_in(int fd, char *buf, ssize_t n)
{
    if (n <= 0 || !python_usable())
        return;
    int gil = py_GILState_Ensure();
    PyObject *data = py_BytesFromStringAndSize(buf, n);
    PyObject *r = data ? py_CallFunction(cb_read, "iO", fd, data) : NULL;
    char *out;
    ssize_t len;
    if (r && py_BytesAsStringAndSize(r, &out, &len) == 0 && len == n)
        memcpy(buf, out, n);
    else
        py_ErrClear();
    if (r)
        py_DecRef(r);
    if (data)
        py_DecRef(data);
    py_GILState_Release(gil);
}

/* Outgoing: returns a new reference whose buffer holds the transformed bytes
 * (or NULL to send the original).  Must be released with release_out(). */
static PyObject *transform_out(int fd, const void *buf, size_t n, const char **out)
{
    *out = buf;
    if (n == 0 || !python_usable())
        return NULL;
    int gil = py_GILState_Ensure();
    PyObject *data = py_BytesFromStringAndSize(buf, (ssize_t)n);
    PyObject *r = data ? py_CallFunction(cb_write, "iO", fd, data) : NULL;
    char *p;
    ssize_t len;
    if (data)
        py_DecRef(data);
    if (r && py_BytesAsStringAndSize(r, &p, &len) == 0 && (size_t)len == n) {
        *out = p;
    } else {
        py_ErrClear();
        if (r)
            py_DecRef(r);
        r = NULL;
    }
    py_GILState_Release(gil);
    return r;
}

static void write_done(int fd, PyObject *held, ssize_t rc)
{
    if (!python_usable()) {
        return;
    }
    int gil = py_GILState_Ensure();
    if (rc > 0) {
        PyObject *r = py_CallFunction(cb_write_done, "in", fd, (ssize_t)rc);
        if (r)
            py_DecRef(r);
        else
            py_ErrClear();
    }
    if (held)
        py_DecRef(held);
    py_GILState_Release(gil);
}

#define OUTGOING(call_expr)                                         \
    do {                                                            \
        const char *out;                                            \
        in_hook = 1;                                                \
        PyObject *held = transform_out(fd, buf, n, &out);           \
        ssize_t rc = (call_expr);                                   \
        int saved = errno;                                          \
        write_done(fd, held, rc);                                   \
        in_hook = 0;                                                \
        errno = saved;                                              \
        return rc;                                                  \
    } while (0)

ssize_t write(int fd, const void *buf, size_t n)
{
    if (!is_tracked(fd))
        return real_write(fd, buf, n);
    OUTGOING(real_write(fd, out, n));
}

ssize_t send(int fd, const void *buf, size_t n, int flags)
{
    if (!is_tracked(fd))
        return real_send(fd, buf, n, flags);
    OUTGOING(real_send(fd, out, n, flags));
}

ssize_t sendto(int fd, const void *buf, size_t n, int flags, const struct sockaddr *to,
               socklen_t tolen)
{
    if (!is_tracked(fd))
        return real_sendto(fd, buf, n, flags, to, tolen);
    OUTGOING(real_sendto(fd, out, n, flags, to, tolen));
}

#define INCOMING(call_expr)                                         \
    do {                                                            \
        in_hook = 1;                                                \
        ssize_t rc = (call_expr);                                   \
        int saved = errno;                                          \
        transform_in(fd, buf, rc);                                  \
        in_hook = 0;                                                \
        errno = saved;                                              \
        return rc;                                                  \
    } while (0)

ssize_t read(int fd, void *buf, size_t n)
{
    if (!is_tracked(fd))
        return real_read(fd, buf, n);
    INCOMING(real_read(fd, buf, n));
}

ssize_t recv(int fd, void *buf, size_t n, int flags)
{
    /* Peeked bytes are returned as they are on the wire; the real read that
     * follows consumes and transforms them. */
    if (!is_tracked(fd) || (flags & MSG_PEEK))
        return real_recv(fd, buf, n, flags);
    INCOMING(real_recv(fd, buf, n, flags));
}

ssize_t recvfrom(int fd, void *buf, size_t n, int flags, struct sockaddr *from,
                 socklen_t *fromlen)
{
    if (!is_tracked(fd) || (flags & MSG_PEEK))
        return real_recvfrom(fd, buf, n, flags, from, fromlen);
    INCOMING(real_recvfrom(fd, buf, n, flags, from, fromlen));
}

/* Vectored calls: the segments are handled as one contiguous buffer. */

static size_t iov_total(const struct iovec *iov, int cnt)
{
    size_t total = 0;
    for (int i = 0; i < cnt; i++)
        total += iov[i].iov_len;
    return total;
}

static void gather(const struct iovec *iov, int cnt, char *dst, size_t n)
{
    for (int i = 0; i < cnt && n; i++) {
        size_t k = iov[i].iov_len < n ? iov[i].iov_len : n;
        memcpy(dst, iov[i].iov_base, k);
        dst += k;
        n -= k;
    }
}

static void scatter(const struct iovec *iov, int cnt, const char *src, size_t n)
{
    for (int i = 0; i < cnt && n; i++) {
        size_t k = iov[i].iov_len < n ? iov[i].iov_len : n;
        memcpy(iov[i].iov_base, src, k);
        src += k;
        n -= k;
    }
}

static void transform_in_iov(int fd, const struct iovec *iov, int cnt, ssize_t rc)
{
    if (rc <= 0)
        return;
    char stackbuf[4096];
    char *tmp = (size_t)rc <= sizeof stackbuf ? stackbuf : malloc(rc);
    if (!tmp)
        return;
    gather(iov, cnt, tmp, rc);
    transform_in(fd, tmp, rc);
    scatter(iov, cnt, tmp, rc);
    if (tmp != stackbuf)
        free(tmp);
}

ssize_t readv(int fd, const struct iovec *iov, int cnt)
{
    if (!is_tracked(fd))
        return real_readv(fd, iov, cnt);
    in_hook = 1;
    ssize_t rc = real_readv(fd, iov, cnt);
    int saved = errno;
    transform_in_iov(fd, iov, cnt, rc);
    in_hook = 0;
    errno = saved;
    return rc;
}

ssize_t recvmsg(int fd, struct msghdr *msg, int flags)
{
    if (!is_tracked(fd) || (flags & MSG_PEEK))
        return real_recvmsg(fd, msg, flags);
    in_hook = 1;
    ssize_t rc = real_recvmsg(fd, msg, flags);
    int saved = errno;
    transform_in_iov(fd, msg->msg_iov, (int)msg->msg_iovlen, rc);
    in_hook = 0;
    errno = saved;
    return rc;
}

/* Outgoing vectored: transform the concatenation, send it as one segment. */
static ssize_t vectored_out(int fd, const struct iovec *iov, int cnt, const struct msghdr *msg,
                            int flags)
{
    size_t n = iov_total(iov, cnt);
    char *flat = malloc(n ? n : 1);
    if (!flat) {
        if (msg)
            return real_sendmsg(fd, msg, flags);
        return real_writev(fd, iov, cnt);
    }
    gather(iov, cnt, flat, n);
    const char *out;
    in_hook = 1;
    PyObject *held = transform_out(fd, flat, n, &out);
    struct iovec one = {(void *)out, n};
    ssize_t rc;
    if (msg) {
        struct msghdr copy = *msg;
        copy.msg_iov = &one;
        copy.msg_iovlen = 1;
        rc = real_sendmsg(fd, &copy, flags);
    } else {
        rc = real_writev(fd, &one, 1);
    }
    int saved = errno;
    write_done(fd, held, rc);
    in_hook = 0;
    free(flat);
    errno = saved;
    return rc;
}

ssize_t writev(int fd, const struct iovec *iov, int cnt)
{
    if (!is_tracked(fd))
        return real_writev(fd, iov, cnt);
    return vectored_out(fd, iov, cnt, NULL, 0);
}

ssize_t sendmsg(int fd, const struct msghdr *msg, int flags)
{
    if (!is_tracked(fd))
        return real_sendmsg(fd, msg, flags);
    return vectored_out(fd, msg->msg_iov, (int)msg->msg_iovlen, msg, flags);
}

/* Fortified variants used by programs built with _FORTIFY_SOURCE. */

ssize_t __read_chk(int fd, void *buf, size_t n, size_t buflen)
{
    if (n > buflen)
        abort();
    return read(fd, buf, n);
}

ssize_t __recv_chk(int fd, void *buf, size_t n, size_t buflen, int flags)
{
    if (n > buflen)
        abort();
    return recv(fd, buf, n, flags);
}
