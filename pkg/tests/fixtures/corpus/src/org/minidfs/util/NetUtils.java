package org.minidfs.util;

import java.io.IOException;
import java.net.Socket;

public class NetUtils {
    public static Socket connect(String addr, int timeoutMs) throws IOException {
        Socket s = new Socket();
        s.setSoTimeout(timeoutMs);
        return s;
    }

    public static String normalize(String host) {
        return host.trim().toLowerCase();
    }
}
